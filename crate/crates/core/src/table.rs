//! Delimited-text output formats shared with the command line tool:
//! sample tables, block-stream tables, structured-text summaries and
//! small static SVG plots.
//!
//! Every file starts with a versioned header line so long-lived outputs
//! stay identifiable. Numbers are written with Rust's shortest-roundtrip
//! formatting, which is deterministic, so identical campaigns produce
//! byte-identical files.

use crate::evt::{EvtSummary, LiminfTrack, MaximaSamples};
use crate::patterson::KappaStudy;
use std::fmt::Write as _;

/// Schema version written into table headers.
pub const TABLE_VERSION: u32 = 1;

/// Sample table: one row per trial, columns (trial_id, y, censored).
pub fn maxima_table(samples: &MaximaSamples, digest: &str, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# cuspwind-samples v{TABLE_VERSION} digest={digest} n={} trials={} seed={seed}",
        samples.n,
        samples.y.len()
    );
    let _ = writeln!(out, "trial_id,y_n,censored");
    for (t, (&y, &c)) in samples.y.iter().zip(&samples.censored).enumerate() {
        let _ = writeln!(out, "{t},{y},{}", c as u8);
    }
    out
}

/// Block-stream table: one row per block, columns (trial_id, k, letter,
/// x_k).
pub fn block_table(streams: &[(u64, Vec<(String, u64)>)], digest: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-blocks v{TABLE_VERSION} digest={digest}");
    let _ = writeln!(out, "trial_id,k,letter,x_k");
    for (trial, blocks) in streams {
        for (k, (letter, len)) in blocks.iter().enumerate() {
            let _ = writeln!(out, "{trial},{},{letter},{len}", k + 1);
        }
    }
    out
}

/// Structured-text summary of an extreme-value campaign.
pub fn evt_summary_text(summary: &EvtSummary, digest: &str, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-evt-summary v{TABLE_VERSION}");
    let _ = writeln!(out, "software = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "digest = \"{digest}\"");
    let _ = writeln!(out, "sampler = \"{}\"", summary.sampler);
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "n = {}", summary.n);
    let _ = writeln!(out, "trials = {}", summary.trials);
    let _ = writeln!(out, "censored = {}", summary.censored);
    let _ = writeln!(out, "delta_used = {}", summary.delta_used);
    let _ = writeln!(out, "kappa_reference = {}", summary.kappa_reference);
    let _ = writeln!(out, "ks_vs_theory = {}", summary.ks_vs_theory);
    if let Some(fit) = &summary.frechet {
        let _ = writeln!(out, "frechet_shape = {}", fit.shape);
        let _ = writeln!(out, "frechet_shape_stderr = {}", fit.shape_stderr);
        let _ = writeln!(out, "frechet_scale = {}", fit.scale);
        let _ = writeln!(out, "frechet_scale_stderr = {}", fit.scale_stderr);
    }
    let _ = writeln!(out, "\n[cdf]");
    let _ = writeln!(out, "# s, empirical");
    for &(s, f) in &summary.empirical_cdf {
        let _ = writeln!(out, "{s},{f}");
    }
    out
}

/// Structured-text report of a two-route kappa study.
pub fn kappa_report_text(
    study: &KappaStudy,
    cfg: &crate::patterson::KappaStudyConfig,
    digest: &str,
    group_name: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-kappa-report v{TABLE_VERSION}");
    let _ = writeln!(out, "software = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "group = \"{group_name}\"");
    let _ = writeln!(out, "digest = \"{digest}\"");
    let _ = writeln!(out, "delta_depth = {}", cfg.delta_depth);
    let _ = writeln!(
        out,
        "atom_depths = [{}]",
        cfg.atom_depths
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(out, "s_margin = {}", cfg.s_margin);
    let _ = writeln!(out, "delta_counting = {}", study.delta_counting.delta);
    let _ = writeln!(
        out,
        "delta_counting_uncertainty = {}",
        study.delta_counting.uncertainty
    );
    let _ = writeln!(out, "delta = {}", study.delta);
    let _ = writeln!(out, "delta_refined = {}", study.delta_refined);
    let _ = writeln!(out, "kappa_direct = {}", study.direct.kappa);
    let _ = writeln!(out, "kappa_direct_uncertainty = {}", study.uncertainty_direct);
    let _ = writeln!(out, "kappa_tail = {}", study.tail.kappa);
    let _ = writeln!(out, "kappa_tail_uncertainty = {}", study.uncertainty_tail);
    let _ = writeln!(out, "mu_d = {}", study.direct.mu_d);
    if let Some(slope) = study.tail.tail_slope {
        let _ = writeln!(out, "tail_slope = {slope}");
        let _ = writeln!(out, "tail_slope_expected = {}", -2.0 * study.delta);
    }
    let _ = writeln!(out, "\n[components]");
    let _ = writeln!(out, "# label, phi_p, w_pow, component");
    for (name, phi, wpow, comp) in &study.direct.components {
        let _ = writeln!(out, "{name},{phi},{wpow},{comp}");
    }
    let _ = writeln!(out, "\n[per_depth]");
    let _ = writeln!(out, "# depth, atoms, fixpoint_worst, kappa_direct, kappa_tail, tail_slope");
    for d in &study.per_depth {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.depth, d.n_atoms, d.fixpoint_worst, d.kappa_direct, d.kappa_tail, d.tail_slope
        );
    }
    let _ = writeln!(out, "\n[tail_masses]");
    let _ = writeln!(out, "# n, mass");
    for &(n, m) in &study.tail.tail_masses {
        let _ = writeln!(out, "{n},{m}");
    }
    out
}

/// Liminf track as a delimited table.
pub fn liminf_table(track: &LiminfTrack, digest: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cuspwind-liminf v{TABLE_VERSION} digest={digest}");
    let _ = writeln!(out, "n,statistic,tail_infimum");
    for ((&n, &s), &t) in track.grid.iter().zip(&track.stat).zip(&track.tail_inf) {
        let _ = writeln!(out, "{n},{s},{t}");
    }
    out
}

/// Minimal static line plot: polylines over a framed data window.
pub struct SvgPlot {
    width: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    log_x: bool,
    body: String,
}

impl SvgPlot {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), log_x: bool) -> Self {
        SvgPlot {
            width: 640.0,
            height: 420.0,
            x_range,
            y_range,
            log_x,
            body: String::new(),
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let fx = if self.log_x {
            (x.ln() - x0.ln()) / (x1.ln() - x0.ln())
        } else {
            (x - x0) / (x1 - x0)
        };
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (40.0 + fx * (self.width - 60.0), self.height - 30.0 - fy * (self.height - 50.0))
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
    }

    pub fn hline(&mut self, y: f64, color: &str) {
        let (x0, y0) = self.map(self.x_range.0, y);
        let (x1, _) = self.map(self.x_range.1, y);
        let _ = writeln!(
            self.body,
            "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" \
             stroke=\"{color}\" stroke-dasharray=\"5,4\" stroke-width=\"1\"/>"
        );
    }

    pub fn finish(self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
             <text x=\"12\" y=\"18\" font-family=\"monospace\" font-size=\"13\">{title}</text>\n\
             <rect x=\"40\" y=\"20\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" stroke=\"#999\"/>\n\
             {body}</svg>\n",
            w = self.width,
            h = self.height,
            iw = self.width - 60.0,
            ih = self.height - 50.0,
            body = self.body,
        )
    }
}
