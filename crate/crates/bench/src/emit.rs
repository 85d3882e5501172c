//! Machine-readable result emission: CSV and JSON with a fixed field order
//! and 17-significant-digit floats.

use std::io::Write;

use mgstokes::cost::SolverParams;

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub params: SolverParams,
    /// Exact predicted work in WU, as a rational string and as float.
    pub predicted_wu_exact: String,
    pub predicted_wu: f64,
    /// Measured kernel flops of the FMG run divided by the prediction.
    pub measured_ratio: Option<f64>,
    pub gamma_u: Option<f64>,
    pub gamma_p: Option<f64>,
    pub delta_u: Option<f64>,
    pub delta_p: Option<f64>,
    pub err_u: Option<f64>,
    pub err_p: Option<f64>,
    pub wall_seconds: f64,
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn opt_json(x: Option<f64>) -> String {
    x.map(f).unwrap_or_else(|| "null".into())
}

pub const CSV_HEADER: &str = "params,predicted_wu_exact,predicted_wu,measured_ratio,gamma_u,gamma_p,delta_u,delta_p,err_u,err_p,wall_seconds";

pub fn to_csv(results: &[BenchResult]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in results {
        s.push_str(&format!(
            "\"{}\",{},{},{},{},{},{},{},{},{},{}\n",
            r.params,
            r.predicted_wu_exact,
            f(r.predicted_wu),
            opt(r.measured_ratio),
            opt(r.gamma_u),
            opt(r.gamma_p),
            opt(r.delta_u),
            opt(r.delta_p),
            opt(r.err_u),
            opt(r.err_p),
            f(r.wall_seconds),
        ));
    }
    s
}

/// JSON document with a config echo and the software version.
pub fn to_json(config_echo: &str, results: &[BenchResult]) -> String {
    let mut s = String::from("{\n");
    s.push_str(&format!("  \"version\": \"{}\",\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("  \"config\": {},\n", json_string(config_echo)));
    s.push_str("  \"results\": [\n");
    for (i, r) in results.iter().enumerate() {
        s.push_str(&format!(
            "    {{\"params\": \"{}\", \"predicted_wu_exact\": \"{}\", \"predicted_wu\": {}, \"measured_ratio\": {}, \"gamma_u\": {}, \"gamma_p\": {}, \"delta_u\": {}, \"delta_p\": {}, \"err_u\": {}, \"err_p\": {}, \"wall_seconds\": {}}}{}\n",
            r.params,
            r.predicted_wu_exact,
            f(r.predicted_wu),
            opt_json(r.measured_ratio),
            opt_json(r.gamma_u),
            opt_json(r.gamma_p),
            opt_json(r.delta_u),
            opt_json(r.delta_p),
            opt_json(r.err_u),
            opt_json(r.err_p),
            f(r.wall_seconds),
            if i + 1 < results.len() { "," } else { "" }
        ));
    }
    s.push_str("  ]\n}\n");
    s
}

fn json_string(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 2);
    out.push('"');
    for c in raw.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn write_file(path: &std::path::Path, content: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())
}
