//! Static SVG training curves: one chart per environment, one mean line and
//! ±std band per algorithm (or ablation variant) across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use savgo_core::trainer::{Algorithm, MetricsRow};

use crate::config::parse_config;
use crate::metrics_io::read_metrics;
use crate::{HarnessError, Variant};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Mean and population std across seeds at each step present in every run.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Curve {
    pub fn aggregate(label: String, runs: &[Vec<MetricsRow>]) -> Self {
        let mut steps: Vec<u64> = runs[0].iter().map(|r| r.step).collect();
        steps.retain(|s| runs.iter().all(|run| run.iter().any(|r| r.step == *s)));
        steps.dedup();
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for s in &steps {
            let v: Vec<f64> =
                runs.iter().map(|run| run.iter().find(|r| r.step == *s).expect("common step").mean_eval_return).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
            mean.push(m);
            std.push(var.sqrt());
        }
        Self { label, steps, mean, std }
    }
}

/// Environment id and series label for a metrics file, read from the
/// `config.json` next to it when present.
fn describe(csv: &Path) -> Result<(String, String), HarnessError> {
    let cfg_path = csv.with_file_name("config.json");
    if !cfg_path.exists() {
        return Ok(("unknown".into(), "run".into()));
    }
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| HarnessError::io(&cfg_path, e))?;
    let cfg = parse_config(&text).map_err(|e| e.context(&cfg_path))?;
    let label = match (cfg.algorithm, Variant::detect(&cfg)) {
        (Algorithm::Sac, _) => "sac".to_string(),
        (Algorithm::Savgo, Some(Variant::Full)) => "savgo".to_string(),
        (Algorithm::Savgo, Some(v)) => format!("savgo {v}"),
        (Algorithm::Savgo, None) => "savgo (multiple ablations)".to_string(),
    };
    Ok((cfg.env.as_str().to_string(), label))
}

/// Reads every CSV, groups runs by environment and label, and writes
/// `<out>/<env>.svg`. Nothing is written unless every input parses.
pub fn emit_plots(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::Usage("no metrics CSVs to plot".into()));
    }
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<Vec<MetricsRow>>>> = BTreeMap::new();
    for path in inputs {
        let rows = read_metrics(path)?;
        if rows.is_empty() {
            return Err(HarnessError::Schema(format!("{}: no data rows", path.display())));
        }
        let (env, label) = describe(path)?;
        groups.entry(env).or_default().entry(label).or_default().push(rows);
    }
    let charts: Vec<(String, String)> = groups
        .into_iter()
        .map(|(env, series)| {
            let curves: Vec<Curve> = series.into_iter().map(|(label, runs)| Curve::aggregate(label, &runs)).collect();
            let svg = render(&env, &curves);
            (env, svg)
        })
        .collect();
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut written = Vec::new();
    for (env, svg) in charts {
        let p = out.join(format!("{env}.svg"));
        std::fs::write(&p, svg).map_err(|e| HarnessError::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn bounds(curves: &[Curve]) -> Scale {
    let steps = curves.iter().flat_map(|c| c.steps.iter().map(|&s| s as f64));
    let (mut x0, mut x1) = steps.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s), b.max(s)));
    let ys = curves.iter().flat_map(|c| c.mean.iter().zip(&c.std).flat_map(|(m, s)| [m - s, m + s]));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        (x0, x1) = (x0 - 1.0, x1 + 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 <= y0 {
        (y0, y1) = (y0 - 1.0, y1 + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    Scale { x0, x1, y0: y0 - pad, y1: y1 + pad }
}

fn render(env: &str, curves: &[Curve]) -> String {
    let sc = bounds(curves);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(env)
    );
    let (bx, by) = (HEIGHT - BOTTOM, WIDTH - RIGHT);
    let _ = writeln!(s, r#"<path class="axis" d="M{LEFT},{TOP} L{LEFT},{bx} L{by},{bx}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = sc.x0 + f * (sc.x1 - sc.x0);
        let yv = sc.y0 + f * (sc.y1 - sc.y0);
        let (px, py) = (sc.x(xv), sc.y(yv));
        let _ = writeln!(
            s,
            r#"<text x="{px:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="10">{xv:.0}</text>"#,
            bx + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{py:.3}" text-anchor="end" font-family="sans-serif" font-size="10">{yv:.1}</text>"#,
            LEFT - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">environment steps</text>"#,
        (LEFT + by) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" transform="rotate(-90 16 {0})" text-anchor="middle" font-family="sans-serif" font-size="12">evaluation return</text>"#,
        (TOP + bx) / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let label = escape(&c.label);
        let pts = |sign: f64| -> Vec<String> {
            c.steps
                .iter()
                .zip(c.mean.iter().zip(&c.std))
                .map(|(&st, (m, sd))| format!("{:.3},{:.3}", sc.x(st as f64), sc.y(m + sign * sd)))
                .collect()
        };
        let mut band = pts(1.0);
        band.extend(pts(-1.0).into_iter().rev());
        let _ = writeln!(
            s,
            r#"<path class="band" data-series="{label}" d="M{} Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" L")
        );
        let _ = writeln!(
            s,
            r#"<path class="mean" data-series="{label}" d="M{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts(0.0).join(" L")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="14" height="4" fill="{color}"/><text x="{}" y="{ly}" font-family="sans-serif" font-size="11">{label}</text>"#,
            ly - 6.0,
            lx + 20.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(values: &[f64]) -> Vec<MetricsRow> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| MetricsRow {
                step: 1000 * (i as u64 + 1),
                mean_eval_return: v,
                std_eval_return: 0.0,
                critic_loss: None,
                actor_loss: None,
                representation_loss: None,
                eta: 1.0,
                beta: None,
                rho: None,
                wall_seconds: 0.0,
            })
            .collect()
    }

    #[test]
    fn aggregate_uses_common_steps() {
        let c = Curve::aggregate("x".into(), &[run(&[1.0, 3.0, 5.0]), run(&[3.0, 5.0])]);
        assert_eq!(c.steps, vec![1000, 2000]);
        assert_eq!(c.mean, vec![2.0, 4.0]);
        assert_eq!(c.std, vec![1.0, 1.0]);
    }

    #[test]
    fn render_is_pure() {
        let c = vec![Curve::aggregate("sac".into(), &[run(&[-900.0, -300.0])])];
        assert_eq!(render("pendulum", &c), render("pendulum", &c));
        assert!(render("a<b", &c).contains("a&lt;b"));
    }
}
