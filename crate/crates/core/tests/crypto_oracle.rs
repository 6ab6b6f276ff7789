use std::collections::BTreeMap;

use evaba::committee::coin_tag;
use evaba::crypto::{
    deal, CoinShare, CryptoError, CryptoParams, Digest, KeyMaterial, SignShare, ThresholdSignature,
};
use evaba::{Signer, Verifier};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn keys(n: u32, f: u32, seed: u64) -> KeyMaterial {
    deal(CryptoParams::new(n, f, seed).unwrap()).unwrap()
}

fn shares(k: &KeyMaterial, signers: &[u32], msg: &[u8]) -> Vec<SignShare> {
    signers
        .iter()
        .map(|&p| k.secret(p).unwrap().sign_share(msg))
        .collect()
}

/// All size-`r` subsets of `1..=n`, in lexicographic order.
fn subsets(n: u32, r: usize) -> Vec<Vec<u32>> {
    fn go(next: u32, n: u32, r: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for p in next..=n {
            cur.push(p);
            go(p + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(1, n, r, &mut Vec::new(), &mut out);
    out
}

#[test]
fn seed_seven_every_quorum_combines_to_one_signature() {
    let k = keys(4, 1, 7);
    assert_eq!(k.params().t, 3);
    let msg = b"hello";
    let sigs: Vec<ThresholdSignature> = subsets(4, 3)
        .iter()
        .map(|s| k.public().combine(&shares(&k, s, msg), msg).unwrap())
        .collect();
    assert_eq!(sigs.len(), 4);
    for s in &sigs {
        assert!(k.public().threshold_validate(s, msg));
        assert_eq!(s, &sigs[0]);
    }
    assert!(!k.public().threshold_validate(&sigs[0], b"hellp"));
    assert_eq!(keys(4, 1, 7), k);
}

#[test]
fn below_threshold_subsets_never_combine() {
    for (n, f) in [(4, 1), (7, 2)] {
        let k = keys(n, f, 3);
        let t = (n - f) as usize;
        for s in subsets(n, t - 1) {
            let sh = shares(&k, &s, b"m");
            assert_eq!(
                k.public().combine(&sh, b"m"),
                Err(CryptoError::InsufficientShares {
                    have: t - 1,
                    needed: t
                })
            );
            // Repeating a signer does not help.
            let mut doubled = sh.clone();
            doubled.push(sh[0].clone());
            assert!(k.public().combine(&doubled, b"m").is_err());
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(matches!(
        CryptoParams::with_threshold(5, 3, 1, 0),
        Err(CryptoError::InvalidParams(_))
    ));
    assert!(CryptoParams::new(7, 1, 0).is_err());
    assert!(CryptoParams::with_threshold(4, 1, 1, 0).is_err());
    assert!(CryptoParams::with_threshold(4, 5, 1, 0).is_err());
}

#[test]
fn honest_shares_validate_for_every_party() {
    let k = keys(10, 3, 11);
    for p in 1..=10 {
        let s = k.secret(p).unwrap().sign_share(b"payload");
        assert!(k.public().share_validate(&s, b"payload"));
        assert!(!k.public().share_validate(&s, b"payload2"));
    }
}

#[test]
fn flipping_any_bit_of_a_share_breaks_it() {
    let k = keys(4, 1, 7);
    let msg = b"flip me";
    let good = k.secret(2).unwrap().sign_share(msg);
    let mut rejected = 0;
    for i in 0..good.share_bytes.len() {
        for bit in 0..8 {
            let mut s = good.clone();
            s.share_bytes[i] ^= 1 << bit;
            assert!(!k.public().share_validate(&s, msg));
            rejected += 1;
        }
    }
    for i in 0..32 {
        let mut s = good.clone();
        s.message_digest.0[i] ^= 0x01;
        assert!(!k.public().share_validate(&s, msg));
        rejected += 1;
    }
    for bit in 0..32 {
        let mut s = good.clone();
        s.signer ^= 1 << bit;
        assert!(!k.public().share_validate(&s, msg));
        rejected += 1;
    }
    assert_eq!(rejected, good.share_bytes.len() * 8 + 64);

    let coin = k.secret(2).unwrap().coin_share(b"tag");
    for i in 0..coin.share_bytes.len() {
        let mut c = coin.clone();
        c.share_bytes[i] ^= 0x80;
        assert!(!k.public().coin_share_verify(&c, b"tag"));
    }
}

#[test]
fn random_bytes_never_pass_as_signatures() {
    let k = keys(4, 1, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let msg = b"target";
    for _ in 0..1000 {
        let len = rng.random_range(0..64);
        let mut bytes = vec![0u8; len];
        rng.fill_bytes(&mut bytes);
        let sig = ThresholdSignature {
            message_digest: Digest::of(msg),
            sig_bytes: bytes,
        };
        assert!(!k.public().threshold_validate(&sig, msg));
    }
}

#[test]
fn signature_and_coin_domains_are_separate() {
    let k = keys(4, 1, 7);
    let tag = b"v1/elect";
    let s = k.secret(1).unwrap().sign_share(tag);
    let as_coin = CoinShare {
        signer: s.signer,
        tag_digest: s.message_digest,
        share_bytes: s.share_bytes.clone(),
    };
    assert!(!k.public().coin_share_verify(&as_coin, tag));

    let c = k.secret(1).unwrap().coin_share(tag);
    let as_sig = SignShare {
        signer: c.signer,
        message_digest: c.tag_digest,
        share_bytes: c.share_bytes.clone(),
    };
    assert!(!k.public().share_validate(&as_sig, tag));

    // Combining a full set of signature shares does not yield a coin share's bytes.
    let sig = k
        .public()
        .combine(&shares(&k, &[1, 2, 3], tag), tag)
        .unwrap();
    assert_ne!(sig.sig_bytes, c.share_bytes);
}

#[test]
fn coin_is_the_same_for_every_qualifying_subset() {
    let k = keys(4, 1, 7);
    let tag = b"v1/elect";
    let outputs: Vec<Vec<u32>> = subsets(4, 2)
        .iter()
        .map(|s| {
            let cs: Vec<_> = s
                .iter()
                .map(|&p| k.secret(p).unwrap().coin_share(tag))
                .collect();
            k.public().coin_toss(tag, &cs, 4, 1).unwrap()
        })
        .collect();
    assert_eq!(outputs.len(), 6);
    assert!(outputs.iter().all(|o| o == &outputs[0]));
    assert_eq!(outputs[0].len(), 1);
    assert!((1..=4).contains(&outputs[0][0]));

    let one = [k.secret(3).unwrap().coin_share(tag)];
    assert!(matches!(
        k.public().coin_toss(tag, &one, 4, 1),
        Err(CryptoError::InsufficientShares { have: 1, needed: 2 })
    ));
}

#[test]
fn coin_outputs_are_sorted_distinct_and_full_at_range() {
    let k = keys(7, 2, 5);
    let cs: Vec<_> = (1..=3)
        .map(|p| k.secret(p).unwrap().coin_share(b"full"))
        .collect();
    assert_eq!(
        k.public().coin_toss(b"full", &cs, 7, 7).unwrap(),
        (1..=7).collect::<Vec<_>>()
    );
    assert_eq!(
        k.public().coin_toss(b"full", &cs, 7, 0).unwrap(),
        Vec::<u32>::new()
    );
    assert!(matches!(
        k.public().coin_toss(b"full", &cs, 7, 8),
        Err(CryptoError::InvalidRange { .. })
    ));
    for i in 0..200u64 {
        let tag = coin_tag("sorted", 0, i);
        let out = k.public().coin_value(&tag, 7, 3).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
        assert!(out.iter().all(|p| (1..=7).contains(p)));
    }
}

#[test]
fn coin_membership_is_uniform() {
    // Each of 10^5 tags picks 2 of 10 parties, so every party is expected
    // 2 * 10^5 / 10 times.
    let (n, s, tags) = (10u32, 2u32, 100_000u64);
    let k = keys(n, 3, 17);
    let signers: Vec<_> = (1..=4).map(|p| k.secret(p).unwrap()).collect();
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for i in 0..tags {
        let tag = coin_tag("uniform", i, 0);
        let cs: Vec<_> = signers.iter().map(|sk| sk.coin_share(&tag)).collect();
        for p in k.public().coin_toss(&tag, &cs, n, s).unwrap() {
            *counts.entry(p).or_default() += 1;
        }
    }
    let expected = (tags * s as u64) as f64 / n as f64;
    let stat: f64 = (1..=n)
        .map(|p| {
            let o = *counts.get(&p).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    assert!(p_value > 0.01, "chi-square {stat:.2}, p = {p_value:.4}");
}

#[test]
fn key_material_survives_a_file_round_trip() {
    let k = keys(7, 2, 123);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("keys.bin");
    k.write_to(&path).unwrap();
    let back = KeyMaterial::read_from(&path).unwrap();
    assert_eq!(back, k);
    let msg = b"after reload";
    let sig = back
        .public()
        .combine(&shares(&back, &[1, 3, 5, 6, 7], msg), msg)
        .unwrap();
    assert!(k.public().threshold_validate(&sig, msg));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        KeyMaterial::read_from(&path),
        Err(CryptoError::KeyFile(_))
    ));
}
