//! Run manifests: the command name plus every resolved flag, enough to rerun
//! the command through the same argument parser.

use std::path::{Path, PathBuf};

use gamma_glm::kv::KvDocument;

use crate::args::{CvArgs, DataArgs, EvaluateArgs, FitArgs, SimulateArgs, SolverArgs};

const PREFIX: &str = "arg.";

/// Flags in the order they were recorded. Switches are stored as
/// `true`/`false`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags(pub Vec<(String, String)>);

impl Flags {
    fn push(&mut self, name: &str, value: impl ToString) {
        self.0.push((name.to_string(), value.to_string()));
    }

    fn push_opt<T: ToString>(&mut self, name: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.push(name, v.to_string());
        }
    }

    fn push_path(&mut self, name: &str, path: &Path) {
        self.push(name, absolute(path).display());
    }

    pub fn set(&mut self, name: &str, value: impl ToString) {
        match self.0.iter_mut().find(|(k, _)| k == name) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.push(name, value),
        }
    }

    pub fn write_into(&self, doc: &mut KvDocument, prefix: &str) {
        for (k, v) in &self.0 {
            doc.set(&format!("{prefix}{k}"), v);
        }
    }

    /// Argument vector for `command` as the parser expects it.
    pub fn to_argv(&self, command: &str) -> Vec<String> {
        let mut argv = vec!["gamma-glm".to_string(), command.to_string()];
        for (k, v) in &self.0 {
            match v.as_str() {
                "true" => argv.push(format!("--{k}")),
                "false" => {}
                _ => {
                    argv.push(format!("--{k}"));
                    argv.push(v.clone());
                }
            }
        }
        argv
    }
}

pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn data_flags(f: &mut Flags, d: &DataArgs) {
    f.push("family", d.family);
    f.push_path("data", &d.data);
    f.push("response", &d.response);
    f.push_opt("offset", &d.offset);
    f.push("log-offset", d.log_offset);
}

/// `n_total` and `n_post` are recorded after resolution against the data
/// size.
fn solver_flags(f: &mut Flags, s: &SolverArgs, n_total: usize, n_post: usize) {
    f.push("gamma", s.gamma);
    f.push("optimizer", s.optimizer);
    f.push("seed", s.seed);
    f.push("n-init", s.n_init);
    f.push("n-total", n_total);
    f.push("d-tilde", s.d_tilde);
    f.push_opt("psi-star", &s.psi_star);
    f.push("n-cand", s.n_cand);
    f.push("n-post", n_post);
    f.push("ransac-trials", s.ransac_trials);
    f.push_opt("ransac-subset", &s.ransac_subset);
    f.push_opt("ransac-threshold", &s.ransac_threshold);
    f.push("ransac-refine", s.ransac_refine);
    f.push("ransac-noise", s.ransac_noise);
    f.push("probes", s.probes);
    f.push("probe-radius", s.probe_radius);
    f.push_opt("sgd-eta0", &s.sgd_eta0);
    f.push("sgd-batch", s.sgd_batch);
    f.push("mm-max-iter", s.mm_max_iter);
    f.push("mm-tol", s.mm_tol);
    f.push("series-tol", s.series_tol);
    f.push("series-max-terms", s.series_max_terms);
}

pub fn simulate_flags(a: &SimulateArgs) -> Flags {
    let mut f = Flags::default();
    f.push("family", a.family);
    f.push("n", a.n);
    f.push("p", a.p);
    f.push("eps", a.eps);
    f.push("seed", a.seed);
    f.push_path("out", &a.out);
    f
}

pub fn fit_flags(a: &FitArgs, n_total: usize, n_post: usize) -> Flags {
    let mut f = Flags::default();
    data_flags(&mut f, &a.data);
    solver_flags(&mut f, &a.solver, n_total, n_post);
    f.push("lambda", a.lambda);
    f.push_path("out", &a.out);
    f
}

pub fn cv_flags(a: &CvArgs, n_total: usize, n_post: usize) -> Flags {
    let mut f = Flags::default();
    data_flags(&mut f, &a.data);
    solver_flags(&mut f, &a.solver, n_total, n_post);
    f.push("grid", &a.grid);
    f.push("gamma0", a.gamma0);
    f.push("folds", a.folds);
    if let Some(out) = &a.out {
        f.push_path("out", out);
    }
    f
}

pub fn evaluate_flags(a: &EvaluateArgs) -> Flags {
    let mut f = Flags::default();
    f.push_path("model", &a.model);
    f.push_path("test", &a.test);
    f.push("metric", format!("{:?}", a.metric).to_lowercase());
    f.push("trim", a.trim);
    f
}

pub fn document(command: &str, flags: &Flags, elapsed_seconds: f64) -> KvDocument {
    let mut doc = KvDocument::new();
    doc.set("command", command);
    flags.write_into(&mut doc, PREFIX);
    doc.set("elapsed_seconds", elapsed_seconds);
    doc
}

/// Command name and flags stored in a manifest.
pub fn parse(doc: &KvDocument) -> gamma_glm::Result<(String, Flags)> {
    let command = doc.require("command")?.to_string();
    let flags = doc
        .entries()
        .filter_map(|(k, v)| k.strip_prefix(PREFIX).map(|k| (k.to_string(), v.to_string())))
        .collect();
    Ok((command, Flags(flags)))
}
