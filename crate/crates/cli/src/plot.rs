//! gnuplot scripts for a finished run.
//!
//! Each script is self-contained: its data sits in an inline `$name << EOD`
//! block, it selects the `svg` terminal (built into every gnuplot) and writes
//! an image with the script's base name. Render with `gnuplot <script>.gp`.
//!
//! - `qq_mahalanobis.gp`: sorted `Δᵀ V⁻¹ Δ` at the last checkpoint against
//!   `χ²_d` quantiles at `(i + 1/2)/m`, with the diagonal.
//! - `variance_vs_n.gp`: empirical `Var(Δ_n)` per coordinate against `n`
//!   (log scale), with `V_ii` as dashed lines.
//! - `truncation_histogram.gp`: replicate counts per final `σ`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use truncsa::montecarlo::{CSV_HEADER_PREFIX, SCHEMA_VERSION};
use truncsa::EnsembleSummary;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub replicate: u64,
    pub checkpoint: u64,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub rows: Vec<SampleRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub file_name: String,
    pub contents: String,
}

pub fn parse_summary(text: &str) -> Result<EnsembleSummary, String> {
    let summary: EnsembleSummary =
        serde_json::from_str(text).map_err(|e| format!("invalid summary: {e}"))?;
    if summary.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "summary schema_version {} is not supported (expected {SCHEMA_VERSION})",
            summary.schema_version
        ));
    }
    Ok(summary)
}

pub fn parse_samples(text: &str) -> Result<Samples, String> {
    let (first, body) = text.split_once('\n').ok_or("samples file is empty")?;
    let version = first
        .strip_prefix(CSV_HEADER_PREFIX)
        .ok_or("missing samples schema line")?;
    if version.trim() != SCHEMA_VERSION.to_string() {
        return Err(format!(
            "samples schema_version {} is not supported (expected {SCHEMA_VERSION})",
            version.trim()
        ));
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let dim = header.len().saturating_sub(2);
    let expected: Vec<String> = ["replicate".to_string(), "checkpoint".to_string()]
        .into_iter()
        .chain((0..dim).map(|i| format!("coord_{i}")))
        .collect();
    if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!(
            "unexpected samples header {:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let bad = |field: &str| format!("row {}: bad {field}", line + 1);
        let replicate = record[0].parse().map_err(|_| bad("replicate"))?;
        let checkpoint = record[1].parse().map_err(|_| bad("checkpoint"))?;
        let delta = (0..dim)
            .map(|i| {
                record[i + 2]
                    .parse::<f64>()
                    .map_err(|_| bad(&expected[i + 2]))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(SampleRow {
            replicate,
            checkpoint,
            delta,
        });
    }
    if rows.is_empty() {
        return Err("samples file has no samples".into());
    }
    Ok(Samples { dim, rows })
}

/// gnuplot reads `NaN` for missing values.
fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "NaN".into()
    }
}

fn header(title: &str, stem: &str) -> String {
    format!(
        "# {title}\n# Render with: gnuplot {stem}.gp\n\
         set terminal svg size 800,600 dynamic\n\
         set output \"{stem}.svg\"\n\
         set title \"{title}\"\n\
         set key top left\n\
         set grid\n"
    )
}

pub fn render(summary: &EnsembleSummary, samples: &Samples) -> Result<Vec<Script>, String> {
    if samples.dim != summary.dim {
        return Err(format!(
            "mismatched files: samples have dimension {}, summary {}",
            samples.dim, summary.dim
        ));
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for row in &samples.rows {
        *counts.entry(row.checkpoint).or_default() += 1;
    }
    for (n, count) in &counts {
        match summary.checkpoints.iter().find(|c| c.n == *n) {
            Some(c) if c.samples == *count => {}
            Some(c) => {
                return Err(format!(
                    "mismatched files: {count} samples at n = {n}, summary reports {}",
                    c.samples
                ))
            }
            None => return Err(format!("mismatched files: checkpoint {n} not in summary")),
        }
    }
    Ok(vec![
        qq_script(summary, samples)?,
        variance_script(summary),
        histogram_script(summary),
    ])
}

fn qq_script(summary: &EnsembleSummary, samples: &Samples) -> Result<Script, String> {
    let d = summary.dim;
    let n = summary
        .checkpoints
        .last()
        .ok_or("summary has no checkpoints")?
        .n;
    let chol = summary
        .theory
        .v
        .clone()
        .cholesky()
        .ok_or("V is not positive definite; Mahalanobis distances are undefined")?;
    let mut d2: Vec<f64> = samples
        .rows
        .iter()
        .filter(|r| r.checkpoint == n)
        .map(|r| {
            let y = chol
                .l()
                .solve_lower_triangular(&DVector::from_column_slice(&r.delta));
            y.map_or(f64::NAN, |y| y.norm_squared())
        })
        .collect();
    if d2.is_empty() {
        return Err(format!("no samples at the last checkpoint n = {n}"));
    }
    d2.sort_by(f64::total_cmp);
    let chi2 = ChiSquared::new(d as f64).map_err(|e| e.to_string())?;
    let m = d2.len() as f64;

    let stem = "qq_mahalanobis";
    let mut s = header(
        &format!("QQ plot of Mahalanobis distances at n = {n} against chi-square({d})"),
        stem,
    );
    s.push_str("$qq << EOD\n# chi2_quantile mahalanobis_sq\n");
    for (i, v) in d2.iter().enumerate() {
        let p = (i as f64 + 0.5) / m;
        writeln!(s, "{} {}", num(chi2.inverse_cdf(p)), num(*v)).unwrap();
    }
    s.push_str("EOD\n");
    s.push_str(
        "set xlabel \"chi-square quantile\"\n\
         set ylabel \"Delta' V^-1 Delta\"\n\
         plot $qq using 1:2 with points pt 7 ps 0.4 title \"samples\", \
         x with lines dt 2 title \"y = x\"\n",
    );
    Ok(Script {
        file_name: format!("{stem}.gp"),
        contents: s,
    })
}

fn variance_script(summary: &EnsembleSummary) -> Script {
    let d = summary.dim;
    let stem = "variance_vs_n";
    let mut s = header("Empirical Var(Delta_n) against the limit V", stem);
    for i in 0..d {
        writeln!(s, "V_{i} = {}", num(summary.theory.v[(i, i)])).unwrap();
    }
    s.push_str("$var << EOD\n# n");
    for i in 0..d {
        write!(s, " var_{i}").unwrap();
    }
    s.push('\n');
    for c in &summary.checkpoints {
        write!(s, "{}", c.n).unwrap();
        for i in 0..d {
            write!(s, " {}", num(c.covariance[(i, i)])).unwrap();
        }
        s.push('\n');
    }
    s.push_str("EOD\n");
    s.push_str(
        "set logscale x\n\
         set xlabel \"n\"\n\
         set ylabel \"Var(Delta_n)\"\n\
         plot ",
    );
    for i in 0..d {
        if i > 0 {
            s.push_str(", \\\n     ");
        }
        write!(
            s,
            "$var using 1:{} with linespoints lc {} title \"Var(Delta_n)_{i}\", \
             V_{i} with lines lc {} dt 2 title \"V_{i}{i}\"",
            i + 2,
            i + 1,
            i + 1
        )
        .unwrap();
    }
    s.push('\n');
    Script {
        file_name: format!("{stem}.gp"),
        contents: s,
    }
}

fn histogram_script(summary: &EnsembleSummary) -> Script {
    let t = &summary.truncation;
    let stem = "truncation_histogram";
    let mut s = header(
        &format!(
            "Final truncation counts over {} replicates ({} diverged)",
            summary.replicates, t.divergence_count
        ),
        stem,
    );
    s.push_str("$hist << EOD\n# sigma count\n");
    for bin in &t.histogram {
        writeln!(s, "{} {}", bin.sigma, bin.count).unwrap();
    }
    s.push_str("EOD\n");
    s.push_str(
        "set style fill solid 0.6\n\
         set boxwidth 0.8\n\
         set xlabel \"final sigma\"\n\
         set ylabel \"replicates\"\n\
         set yrange [0:*]\n\
         plot $hist using 1:2 with boxes title \"replicates\"\n",
    );
    Script {
        file_name: format!("{stem}.gp"),
        contents: s,
    }
}
