//! Python bindings: analyze bytecode, score feature vectors against pinned
//! corpus statistics, and run the evaluation arithmetic from Python.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use obfuscan_core::features::{extract_features, FeatureConfig};
use obfuscan_core::scoring;

fn to_py_err(e: obfuscan_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Decode hex text ("0x"-prefixed or bare) into raw bytes.
fn parse_input(code: &str) -> PyResult<Vec<u8>> {
    obfuscan_core::bytecode::parse_hex(code).map_err(to_py_err)
}

/// Analyze one contract and return its features, sites and flags as a dict.
#[pyfunction]
#[pyo3(signature = (code, sload_steps=true, selfdestruct_sites=true))]
fn analyze(
    py: Python<'_>,
    code: &str,
    sload_steps: bool,
    selfdestruct_sites: bool,
) -> PyResult<Py<PyDict>> {
    let bytes = parse_input(code)?;
    let analysis = obfuscan_core::analyze_bytecode_with(&bytes, None, selfdestruct_sites)
        .map_err(to_py_err)?;
    let config = FeatureConfig {
        sload_steps,
        selfdestruct_sites,
        ..Default::default()
    };
    let outcome = extract_features(&analysis, &config);
    let v = &outcome.vector;

    let dict = PyDict::new(py);
    dict.set_item("f1_addr_steps", v.f1_addr_steps)?;
    dict.set_item("f2_string_ops", v.f2_string_ops)?;
    dict.set_item("f3_external_call", v.f3_external_call)?;
    dict.set_item("f4_branch_height", v.f4_branch_height)?;
    dict.set_item("f5_tir", v.f5_tir)?;
    dict.set_item("f6_similarity", v.f6_similarity)?;
    dict.set_item("f7_irrelevant_logs", v.f7_irrelevant_logs)?;
    dict.set_item("site_count", v.site_count)?;
    dict.set_item("values", v.as_array().to_vec())?;
    dict.set_item(
        "flags",
        v.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    )?;

    let sites = PyList::empty(py);
    for site in
        obfuscan_core::transfer::site_records(&analysis.program, &analysis.units, &analysis.sites)
    {
        let entry = PyDict::new(py);
        entry.set_item("offset", site.offset)?;
        entry.set_item("opcode", site.opcode)?;
        entry.set_item("selector", site.selector)?;
        entry.set_item("flags", site.flags)?;
        sites.append(entry)?;
    }
    dict.set_item("sites", sites)?;
    Ok(dict.into())
}

/// Canonical text disassembly of hex bytecode.
#[pyfunction]
fn disassemble(code: &str) -> PyResult<String> {
    let bytes = parse_input(code)?;
    Ok(obfuscan_core::bytecode::disassemble(
        &obfuscan_core::bytecode::decode(&bytes),
    ))
}

/// Upper confidence bound mean + t * std / sqrt(n).
#[pyfunction]
fn threshold(mean: f64, std: f64, n: u64, confidence: f64) -> PyResult<f64> {
    scoring::threshold(mean, std, n, confidence).map_err(to_py_err)
}

/// Welch's t-test; returns (t, df, p_two_sided).
#[pyfunction]
fn welch_t(group_a: Vec<f64>, group_b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let r = scoring::welch_t(&group_a, &group_b).map_err(to_py_err)?;
    Ok((r.t, r.df, r.p))
}

/// ROC-AUC by midrank Mann-Whitney.
#[pyfunction]
fn roc_auc(labels: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    obfuscan_core::eval::roc_auc(&labels, &scores).map_err(to_py_err)
}

/// PR-AUC by step-interpolated average precision.
#[pyfunction]
fn pr_auc(labels: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    obfuscan_core::eval::pr_auc(&labels, &scores).map_err(to_py_err)
}

fn seven(values: Vec<f64>) -> PyResult<[f64; 7]> {
    values
        .try_into()
        .map_err(|_| PyValueError::new_err("expected exactly 7 feature values"))
}

/// Pinned corpus statistics: fit from rows, serialize, and score vectors.
#[pyclass]
struct ScoreModel {
    snapshot: scoring::StatsSnapshot,
}

#[pymethods]
impl ScoreModel {
    /// Estimate per-feature mean/std from an iterable of 7-value rows.
    #[staticmethod]
    fn fit(snapshot_id: &str, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let mut stats = scoring::CorpusStats::default();
        for row in rows {
            stats.push_row(seven(row)?);
        }
        if stats.n() < 2 {
            return Err(PyValueError::new_err(
                "need at least two rows to estimate deviations",
            ));
        }
        Ok(Self {
            snapshot: scoring::StatsSnapshot::from_stats(snapshot_id, &stats),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            snapshot: scoring::StatsSnapshot::from_json(text).map_err(to_py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.snapshot.to_json().map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.snapshot.n
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.snapshot.mu.to_vec()
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.snapshot.sigma.to_vec()
    }

    /// Score one 7-value row; returns (z, per_feature_terms).
    fn score(&self, values: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let values = seven(values)?;
        let (z, terms, _) = scoring::z_score(&values, &self.snapshot.mu, &self.snapshot.sigma);
        Ok((z, terms.to_vec()))
    }
}

#[pymodule]
fn obfuscan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(disassemble, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    m.add_class::<ScoreModel>()?;
    Ok(())
}
