//! Python bindings: threshold keys, committee helpers, a single protocol
//! party driven by the caller, and the seeded simulator and experiments.
//!
//! Shares and signatures cross the boundary as opaque `bytes`. Reports and
//! trace summaries come back as plain dicts.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use evaba::codec::{DecodeError, Reader, Writer};
use evaba::committee::committee_probability as probability;
use evaba::crypto::{deal, CoinShare, CryptoParams, KeyMaterial, SignShare, ThresholdSignature};
use evaba::engine::{map_to_committee as map_raw, Engine, EngineConfig, Output, Target};
use evaba::harness::{self, ExperimentConfig};
use evaba::sim::{default_validity, run, DelayRule};
use evaba::{Committee, PartyId, Signer, Verifier};

/// A target-delay rule as `(from, to, tag_prefix)`, `None` matching anything.
type DelaySpec = (Option<PartyId>, Option<PartyId>, Option<String>);

const SHARE_TAG: u8 = 0xe1;
const SIGNATURE_TAG: u8 = 0xe2;
const COIN_SHARE_TAG: u8 = 0xe3;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn encode_with(tag: u8, f: impl FnOnce(&mut Writer)) -> Vec<u8> {
    let mut w = Writer::new(tag);
    f(&mut w);
    w.finish()
}

fn decode_with<T>(
    tag: u8,
    bytes: &[u8],
    f: impl FnOnce(&mut Reader<'_>) -> Result<T, DecodeError>,
) -> Result<T, DecodeError> {
    let mut r = Reader::new(bytes);
    let t = r.u8()?;
    if t != tag {
        return Err(DecodeError::UnknownTag(t));
    }
    let v = f(&mut r)?;
    r.finish()?;
    Ok(v)
}

fn to_json_object(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Dealt threshold keys for `n = 3f + 1` parties with threshold `n - f`.
#[pyclass(module = "pyevaba", frozen)]
struct KeySet {
    keys: KeyMaterial,
}

impl KeySet {
    fn signer(&self, party: PartyId) -> PyResult<&evaba::crypto::SecretShare> {
        self.keys
            .secret(party)
            .ok_or_else(|| PyValueError::new_err(format!("no party {party}")))
    }
}

#[pymethods]
impl KeySet {
    #[new]
    #[pyo3(signature = (n, f, seed=0))]
    fn new(n: u32, f: u32, seed: u64) -> PyResult<Self> {
        let params = CryptoParams::new(n, f, seed).map_err(value_error)?;
        Ok(KeySet {
            keys: deal(params).map_err(value_error)?,
        })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.keys.params().n
    }

    #[getter]
    fn f(&self) -> u32 {
        self.keys.params().f
    }

    #[getter]
    fn t(&self) -> u32 {
        self.keys.params().t
    }

    fn sign_share<'py>(
        &self,
        py: Python<'py>,
        party: PartyId,
        message: &[u8],
    ) -> PyResult<Bound<'py, PyBytes>> {
        let share = self.signer(party)?.sign_share(message);
        Ok(PyBytes::new(
            py,
            &encode_with(SHARE_TAG, |w| share.encode(w)),
        ))
    }

    fn share_validate(&self, share: &[u8], message: &[u8]) -> bool {
        decode_with(SHARE_TAG, share, SignShare::decode)
            .is_ok_and(|s| self.keys.public().share_validate(&s, message))
    }

    /// Combines at least `t` shares from distinct parties.
    fn combine<'py>(
        &self,
        py: Python<'py>,
        shares: Vec<Vec<u8>>,
        message: &[u8],
    ) -> PyResult<Bound<'py, PyBytes>> {
        let shares = shares
            .iter()
            .map(|b| decode_with(SHARE_TAG, b, SignShare::decode))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        let sig = self
            .keys
            .public()
            .combine(&shares, message)
            .map_err(value_error)?;
        Ok(PyBytes::new(
            py,
            &encode_with(SIGNATURE_TAG, |w| sig.encode(w)),
        ))
    }

    fn threshold_validate(&self, signature: &[u8], message: &[u8]) -> bool {
        decode_with(SIGNATURE_TAG, signature, ThresholdSignature::decode)
            .is_ok_and(|s| self.keys.public().threshold_validate(&s, message))
    }

    fn coin_share<'py>(
        &self,
        py: Python<'py>,
        party: PartyId,
        tag: &[u8],
    ) -> PyResult<Bound<'py, PyBytes>> {
        let share = self.signer(party)?.coin_share(tag);
        Ok(PyBytes::new(
            py,
            &encode_with(COIN_SHARE_TAG, |w| share.encode(w)),
        ))
    }

    fn coin_share_verify(&self, share: &[u8], tag: &[u8]) -> bool {
        decode_with(COIN_SHARE_TAG, share, CoinShare::decode)
            .is_ok_and(|s| self.keys.public().coin_share_verify(&s, tag))
    }

    /// `s` distinct sorted ids in `1..=range_n`, given `f + 1` coin shares.
    fn coin_toss(
        &self,
        tag: &[u8],
        shares: Vec<Vec<u8>>,
        range_n: u32,
        s: u32,
    ) -> PyResult<Vec<PartyId>> {
        let shares = shares
            .iter()
            .map(|b| decode_with(COIN_SHARE_TAG, b, CoinShare::decode))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_error)?;
        self.keys
            .public()
            .coin_toss(tag, &shares, range_n, s)
            .map_err(value_error)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.keys.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(KeySet {
            keys: KeyMaterial::from_bytes(data).map_err(value_error)?,
        })
    }

    fn __repr__(&self) -> String {
        let p = self.keys.params();
        format!("KeySet(n={}, f={}, t={})", p.n, p.f, p.t)
    }
}

/// One honest protocol party. The caller moves messages between parties:
/// every call returns `(messages, events)` where a message is
/// `(to, bytes)` with `to = None` meaning every party, the sender included.
#[pyclass(module = "pyevaba", unsendable)]
struct Party {
    engine: Engine,
}

fn output_to_py<'py>(
    py: Python<'py>,
    out: Output,
) -> PyResult<(Bound<'py, PyList>, Bound<'py, PyList>)> {
    let messages = PyList::empty(py);
    for m in out.messages {
        let to = match m.to {
            Target::All => None,
            Target::To(p) => Some(p),
        };
        messages.append((to, PyBytes::new(py, &m.msg.encode())))?;
    }
    let events = PyList::empty(py);
    for e in out.events {
        events.append((e.name(), e.view()))?;
    }
    Ok((messages, events))
}

#[pymethods]
impl Party {
    #[new]
    #[pyo3(signature = (keys, party, value, kappa=None, max_views=20, instance=0))]
    fn new(
        keys: &KeySet,
        party: PartyId,
        value: Vec<u8>,
        kappa: Option<u32>,
        max_views: u64,
        instance: u64,
    ) -> PyResult<Self> {
        let p = *keys.keys.params();
        let kappa = kappa.unwrap_or(p.f + 1);
        if kappa == 0 || kappa > p.n {
            return Err(PyValueError::new_err(format!(
                "kappa must be in 1..={}",
                p.n
            )));
        }
        let signer = Arc::new(keys.signer(party)?.clone());
        Ok(Party {
            engine: Engine::new(
                EngineConfig {
                    instance,
                    kappa,
                    max_views,
                },
                keys.keys.public().clone(),
                signer,
                value,
                default_validity(),
            ),
        })
    }

    fn start<'py>(
        &mut self,
        py: Python<'py>,
    ) -> PyResult<(Bound<'py, PyList>, Bound<'py, PyList>)> {
        output_to_py(py, self.engine.start())
    }

    fn handle<'py>(
        &mut self,
        py: Python<'py>,
        sender: PartyId,
        data: &[u8],
    ) -> PyResult<(Bound<'py, PyList>, Bound<'py, PyList>)> {
        output_to_py(py, self.engine.handle(sender, data))
    }

    #[getter]
    fn id(&self) -> PartyId {
        self.engine.me()
    }

    #[getter]
    fn view(&self) -> u64 {
        self.engine.view()
    }

    #[getter]
    fn lock(&self) -> u64 {
        self.engine.lock()
    }

    /// `(view, value)` once decided.
    #[getter]
    fn decided<'py>(&self, py: Python<'py>) -> Option<(u64, Bound<'py, PyBytes>)> {
        self.engine
            .decided()
            .map(|(v, value)| (*v, PyBytes::new(py, value)))
    }

    #[getter]
    fn halted(&self) -> bool {
        self.engine.is_halted()
    }

    fn committee(&self, view: u64) -> Option<Vec<PartyId>> {
        self.engine.committee(view).map(|c| c.members.clone())
    }

    fn leader(&self, view: u64) -> Option<PartyId> {
        self.engine.leader(view)
    }
}

/// Probability that a uniformly drawn committee of size `kappa` consists
/// only of Byzantine parties, as a `fractions.Fraction`.
#[pyfunction]
fn committee_probability(py: Python<'_>, n: u32, f: u32, kappa: u32) -> PyResult<Py<PyAny>> {
    if f > n {
        return Err(PyValueError::new_err("f exceeds n"));
    }
    let r = probability(n, f, kappa);
    let fraction = py.import("fractions")?.getattr("Fraction")?;
    Ok(fraction.call1((*r.numer(), *r.denom()))?.unbind())
}

/// The committee member a raw coin output in `1..=n` elects.
#[pyfunction]
fn map_to_committee(raw: PartyId, members: Vec<PartyId>) -> PyResult<PartyId> {
    let mut members = members;
    members.sort_unstable();
    members.dedup();
    if members.is_empty() {
        return Err(PyValueError::new_err("empty committee"));
    }
    Ok(map_raw(raw, &Committee { view: 0, members }))
}

#[allow(clippy::too_many_arguments)]
fn experiment_config(
    n: u32,
    f: u32,
    kappa: Option<u32>,
    adversary: &str,
    byzantine: Option<Vec<PartyId>>,
    scheduler: &str,
    delay: Vec<DelaySpec>,
    max_views: u64,
) -> PyResult<ExperimentConfig> {
    let mut c = ExperimentConfig::new(n, f).with_adversary(adversary);
    c.kappa = kappa.unwrap_or(f + 1);
    if let Some(ids) = byzantine {
        c.byzantine = ids;
    }
    c.scheduler = scheduler.into();
    c.delay = delay
        .into_iter()
        .map(|(from, to, tag_prefix)| DelayRule {
            from,
            to,
            tag_prefix,
        })
        .collect();
    c.max_views = max_views;
    c.validate().map_err(value_error)?;
    Ok(c)
}

/// Runs one seeded simulation and returns its summary record. With
/// `events=True` the event log is included under `"events"`.
#[pyfunction]
#[pyo3(signature = (n, f, kappa=None, seed=0, adversary="none", byzantine=None, scheduler="fifo", delay=Vec::new(), max_views=20, events=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    n: u32,
    f: u32,
    kappa: Option<u32>,
    seed: u64,
    adversary: &str,
    byzantine: Option<Vec<PartyId>>,
    scheduler: &str,
    delay: Vec<DelaySpec>,
    max_views: u64,
    events: bool,
) -> PyResult<Py<PyAny>> {
    let c = experiment_config(
        n, f, kappa, adversary, byzantine, scheduler, delay, max_views,
    )?;
    let mut sc = c.sim_config(seed).map_err(value_error)?;
    sc.record_events = events;
    let trace = py.detach(|| run(&sc)).map_err(value_error)?;
    let text =
        String::from_utf8(trace.to_jsonl()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let mut lines: Vec<&str> = text.lines().collect();
    let summary = to_json_object(py, lines.pop().unwrap_or("{}"))?;
    let dict = summary.bind(py).cast::<PyDict>()?.clone();
    if events {
        let list = PyList::empty(py);
        for line in lines {
            list.append(to_json_object(py, line)?)?;
        }
        dict.set_item("events", list)?;
    }
    Ok(dict.into_any().unbind())
}

/// Runs seeds `seed..seed + runs` and returns the aggregated report.
#[pyfunction]
#[pyo3(signature = (n, f, runs=1, seed=0, kappa=None, adversary="none", byzantine=None, scheduler="random", delay=Vec::new(), max_views=20, baseline=false))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    n: u32,
    f: u32,
    runs: u64,
    seed: u64,
    kappa: Option<u32>,
    adversary: &str,
    byzantine: Option<Vec<PartyId>>,
    scheduler: &str,
    delay: Vec<DelaySpec>,
    max_views: u64,
    baseline: bool,
) -> PyResult<Py<PyAny>> {
    let mut c = experiment_config(
        n, f, kappa, adversary, byzantine, scheduler, delay, max_views,
    )?;
    c.runs = runs;
    c.seed = seed;
    let report = py
        .detach(|| harness::run_experiment(&c, None, baseline))
        .map_err(value_error)?;
    to_json_object(py, &report.to_json())
}

/// Exact and sampled all-Byzantine committee probability per κ.
#[pyfunction]
#[pyo3(signature = (n, f, kappas, samples=100_000, seed=0))]
fn committee_stats(
    py: Python<'_>,
    n: u32,
    f: u32,
    kappas: Vec<u32>,
    samples: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let rows = py
        .detach(|| harness::committee_stats(n, f, &kappas, samples, seed))
        .map_err(value_error)?;
    let text = serde_json::to_string(&rows).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_json_object(py, &text)
}

#[pymodule]
fn pyevaba(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KeySet>()?;
    m.add_class::<Party>()?;
    m.add_function(wrap_pyfunction!(committee_probability, m)?)?;
    m.add_function(wrap_pyfunction!(map_to_committee, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(committee_stats, m)?)?;
    m.add("REPORT_VERSION", harness::REPORT_VERSION)?;
    Ok(())
}
