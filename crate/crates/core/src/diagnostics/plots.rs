use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DiagnosticsError, GrowthReport};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Line,
    Dots,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    mark: Mark,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    series: Vec<Series>,
    notes: Vec<String>,
}

impl Figure {
    fn new(title: &str, x_label: &str, y_label: &str, log_x: bool, log_y: bool) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x,
            log_y,
            series: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn add(&mut self, label: String, points: Vec<(f64, f64)>, mark: Mark) {
        self.series.push(Series { label, points, mark });
    }

    fn transform(&self, p: (f64, f64)) -> Option<(f64, f64)> {
        let x = if self.log_x { (p.0 > 0.0).then(|| p.0.log10())? } else { p.0 };
        let y = if self.log_y { (p.1 > 0.0).then(|| p.1.log10())? } else { p.1 };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    fn render(&self) -> String {
        let pts: Vec<Vec<(f64, f64)>> =
            self.series.iter().map(|s| s.points.iter().filter_map(|&p| self.transform(p)).collect()).collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in pts.iter().flatten() {
            x0 = x0.min(p.0);
            x1 = x1.max(p.0);
            y0 = y0.min(p.1);
            y1 = y1.max(p.1);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        if y1 - y0 <= 0.0 {
            let pad = 0.5 * y0.abs().max(1e-300);
            (y0, y1) = (y0 - pad, y1 + pad);
        }
        let (px, py) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * px;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * py;
        let scale = |log: bool| if log { "log" } else { "linear" };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-x-scale="{}" data-y-scale="{}">"#,
            scale(self.log_x),
            scale(self.log_y)
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{px}" height="{py}" fill="none" stroke="black" stroke-width="1"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let tick = |v: f64, log: bool| if log { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.3e}") };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                sx(xv),
                H - BOTTOM + 16.0,
                tick(xv, self.log_x)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                sy(yv) + 3.0,
                tick(yv, self.log_y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + px / 2.0,
            H - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + py / 2.0,
            TOP + py / 2.0,
            esc(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[i % COLORS.len()];
            match series.mark {
                Mark::Line if p.len() > 1 => {
                    let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
                }
                _ => {}
            }
            for &(x, y) in p {
                let r = if series.mark == Mark::Dots { 2.5 } else { 2.0 };
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#, sx(x), sy(y));
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                LEFT + 8.0,
                TOP + 14.0 + 14.0 * i as f64,
                esc(&series.label)
            );
        }
        for (i, note) in self.notes.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text class="annotation" x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                W - RIGHT - 8.0,
                TOP + 14.0 + 14.0 * i as f64,
                esc(note)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), DiagnosticsError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Write one CSV table and one SVG figure per diagnostic family, plus the witness table.
/// Returns the SVG paths.
pub fn emit_plots(report: &GrowthReport, dir: &Path) -> Result<Vec<PathBuf>, DiagnosticsError> {
    std::fs::create_dir_all(dir)?;
    let mut svgs = Vec::new();
    let mut save = |name: &str, fig: &Figure| -> Result<(), DiagnosticsError> {
        let path = dir.join(name);
        std::fs::write(&path, fig.render())?;
        svgs.push(path);
        Ok(())
    };

    let fin = report.gradient_final.as_deref().unwrap_or(&[]);
    let rows: Vec<String> = report
        .gradient_t0
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let f = fin.get(i).map(|b| format!("{:e}", b.grad_sup)).unwrap_or_default();
            format!("{},{:e},{}", a.r, a.grad_sup, f)
        })
        .collect();
    write_csv(&dir.join("gradient_annuli.csv"), "r,grad_sup_t0,grad_sup_final", &rows)?;
    let mut fig = Figure::new("sup |grad u| on annuli r/2 <= |x| <= 2r", "r", "max |d_i u_j|", true, true);
    fig.add("t = 0".into(), report.gradient_t0.iter().map(|a| (a.r, a.grad_sup)).collect(), Mark::Line);
    if !fin.is_empty() {
        fig.add(format!("t = {}", report.horizon), fin.iter().map(|a| (a.r, a.grad_sup)).collect(), Mark::Line);
    }
    save("gradient_annuli.svg", &fig)?;

    let mut rows = Vec::new();
    let mut fig = Figure::new("gamma and max |eta| per strip", "t", "value", false, false);
    for s in &report.strips {
        for (k, t) in s.times.iter().enumerate() {
            let g = s.gamma.get(k).copied().unwrap_or(0.0);
            let e = s.eta_abs_max.get(k).copied().unwrap_or(0.0);
            rows.push(format!("{},{},{:e},{:e}", t, s.n, g, e));
        }
        fig.add(format!("gamma n={}", s.n), s.times.iter().copied().zip(s.gamma.iter().copied()).collect(), Mark::Line);
        fig.add(
            format!("max|eta| n={}", s.n),
            s.times.iter().copied().zip(s.eta_abs_max.iter().copied()).collect(),
            Mark::Dots,
        );
    }
    write_csv(&dir.join("gamma_eta.csv"), "t,strip,gamma,eta_abs_max", &rows)?;
    save("gamma_eta.svg", &fig)?;

    let mut rows = Vec::new();
    let mut fig = Figure::new("Hardy pullback of |w/x2|^2 against strip index", "n", "value", true, true);
    for (tag, h) in [("t0", &report.hardy_t0), ("final", &report.hardy)] {
        let Some(h) = h else { continue };
        for r in &h.rows {
            rows.push(format!(
                "{},{},{},{:e},{:e},{:e},{:e}",
                tag, h.beta, r.n, r.value, r.value_t0, r.compression_inf, r.expansion_sup
            ));
        }
        fig.add(format!("t = {} (beta = {})", h.horizon, h.beta), h.rows.iter().map(|r| (r.n as f64, r.value)).collect(), Mark::Line);
        fig.notes.push(format!(
            "slope = {:.4} at t = {} (95% CI [{:.3}, {:.3}])",
            h.exponent.slope, h.horizon, h.exponent.ci95[0], h.exponent.ci95[1]
        ));
    }
    write_csv(
        &dir.join("hardy.csv"),
        "time,beta,n,value,value_t0,compression_inf,expansion_sup",
        &rows,
    )?;
    save("hardy.svg", &fig)?;

    let rows: Vec<String> = report
        .lemma
        .samples
        .iter()
        .map(|s| format!("{},{:e},{:e},{:e},{:e},{:e},{}", s.t, s.x[0], s.x[1], s.log_factor, s.ratio1, s.ratio2, s.passes))
        .collect();
    write_csv(&dir.join("lemma_residuals.csv"), "t,x1,x2,log_factor,ratio1,ratio2,passes", &rows)?;
    let mut fig = Figure::new("key-lemma residual ratios", "log(1 + x1/x2)", "residual / budget scale", false, false);
    fig.add("residual1 / |w|_inf".into(), report.lemma.samples.iter().map(|s| (s.log_factor, s.ratio1)).collect(), Mark::Dots);
    fig.add("residual2 / scale2".into(), report.lemma.samples.iter().map(|s| (s.log_factor, s.ratio2)).collect(), Mark::Dots);
    fig.notes.push(format!("calib = {}", report.lemma.calib));
    save("lemma_residuals.svg", &fig)?;

    let rows: Vec<String> = report
        .strips
        .iter()
        .filter_map(|s| {
            let w = s.witness.as_ref()?;
            Some(format!(
                "{},{},{},{},{:e},{:e},{:e},{},{}",
                s.n,
                w.particle_id,
                w.horizon,
                w.t_star,
                w.ratio,
                w.log_growth,
                w.mean_rate,
                w.certified,
                s.witness_floor.map(|f| format!("{f:e}")).unwrap_or_default()
            ))
        })
        .collect();
    write_csv(
        &dir.join("witnesses.csv"),
        "strip,particle_id,horizon,t_star,ratio,log_growth,mean_rate,certified,floor",
        &rows,
    )?;
    Ok(svgs)
}
