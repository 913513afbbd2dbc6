//! Model files: the fitted parameters, the fit report and the flags that
//! produced them.

use std::path::Path;

use gamma_glm::data::CsvSchema;
use gamma_glm::kv::KvDocument;
use gamma_glm::pipeline::PipelineFit;
use gamma_glm::series::SeriesTolerance;
use gamma_glm::{ModelFamily, Result, Theta};

use crate::manifest::Flags;

pub struct Model {
    pub family: ModelFamily,
    pub gamma: f64,
    pub lambda: f64,
    pub theta: Theta,
    pub schema: CsvSchema,
    pub series: SeriesTolerance,
}

pub fn document(family: ModelFamily, fit: &PipelineFit, lambda: f64, gamma: f64, flags: &Flags) -> KvDocument {
    let r = &fit.report;
    let mut doc = KvDocument::new();
    doc.set("family", family);
    doc.set("gamma", gamma);
    doc.set("lambda", lambda);
    doc.set("beta0", r.theta.beta0);
    doc.set_list("beta", &r.theta.beta);
    if let Some(s2) = r.theta.sigma2 {
        doc.set("sigma2", s2);
    }
    doc.set("stop_index", r.stop_index);
    doc.set("pg_norm", r.pg_norm);
    doc.set("init_pg_norm", fit.init_pg_norm);
    doc.set("emp_risk", r.emp_risk);
    doc.set("batch_size", r.policy.batch_size);
    doc.set("horizon", r.policy.horizon);
    doc.set("eta", r.policy.eta);
    doc.set("samples_used", r.samples_used);
    doc.set("smoothness_l", fit.smoothness.l);
    doc.set("smoothness_tau2", fit.smoothness.tau2);
    // the output path is left out so that a replay into another file is
    // byte-identical
    let run = Flags(flags.0.iter().filter(|(k, _)| k != "out").cloned().collect());
    run.write_into(&mut doc, "run.");
    doc
}

pub fn read(path: &Path) -> Result<Model> {
    let doc = KvDocument::read(path)?;
    let family: ModelFamily = doc.require("family")?.parse()?;
    let theta = Theta {
        beta0: doc.parse("beta0")?,
        beta: doc.parse_list("beta")?,
        sigma2: if family.has_variance() {
            Some(doc.parse("sigma2")?)
        } else {
            None
        },
    };
    theta.validate(family, theta.beta.len())?;
    let mut schema = CsvSchema::response(doc.get("run.response").unwrap_or("y"));
    if let Some(col) = doc.get("run.offset") {
        schema = schema.with_offset(col, doc.get("run.log-offset") == Some("true"));
    }
    let series = match (doc.get("run.series-tol"), doc.get("run.series-max-terms")) {
        (Some(_), Some(_)) => SeriesTolerance::new(doc.parse("run.series-tol")?, doc.parse("run.series-max-terms")?)?,
        _ => SeriesTolerance::default(),
    };
    Ok(Model {
        family,
        gamma: doc.parse("gamma")?,
        lambda: doc.parse("lambda")?,
        theta,
        schema,
        series,
    })
}
