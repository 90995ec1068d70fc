//! Deterministic SVG line charts of telemetry and sweep CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{guard_outputs, STATUS_OK};

/// Figure family, which fixes the input schema and the axis labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Seed-averaged reward per timestep from a `telemetry.csv`.
    Reward,
    /// Seed-averaged sum rate against BS power from a `power_sweep.csv`.
    Power,
    /// Seed-averaged sum rate against element count from an `elements_sweep.csv`.
    Elements,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Self::Reward),
            "power" => Ok(Self::Power),
            "elements" => Ok(Self::Elements),
            _ => Err(Error::Usage(format!(
                "unknown plot kind '{s}' (expected reward, power or elements)"
            ))),
        }
    }
}

impl PlotKind {
    fn labels(self) -> (&'static str, &'static str) {
        match self {
            Self::Reward => ("Timestep", "Average reward"),
            Self::Power => ("BS power (dBm)", "Average sum rate (bit/s/Hz)"),
            Self::Elements => ("Number of HRIS elements N", "Average sum rate (bit/s/Hz)"),
        }
    }
}

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Csv(e.to_string()))?;
        if rows.is_empty() {
            return Err(Error::Csv("no data rows".into()));
        }
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column '{name}'")))
    }

    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.parse()
            .map_err(|_| Error::Csv(format!("row {}: '{s}' is not a number", row + 1)))
    }
}

/// Averages `(series, x) -> y` samples, keeping series and x sorted.
fn average(samples: Vec<(String, f64, f64)>) -> Vec<Series> {
    let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (label, x, y) in samples {
        let e = acc
            .entry(label)
            .or_default()
            .entry(x.to_bits())
            .or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(label, pts)| {
            let mut points: Vec<(f64, f64)> = pts
                .into_values()
                .map(|(x, s, n)| (x, s / n as f64))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

/// Extracts the series of a figure kind from CSV text.
pub fn series_from_csv(text: &str, kind: PlotKind) -> Result<Vec<Series>> {
    let t = Table::parse(text)?;
    let scheme = t.col("scheme")?;
    let mut samples = Vec::with_capacity(t.rows.len());
    match kind {
        PlotKind::Reward => {
            let (seed, reward) = (t.col("seed")?, t.col("reward")?);
            let mut counters: BTreeMap<(String, String), usize> = BTreeMap::new();
            for i in 0..t.rows.len() {
                let key = (t.rows[i][scheme].to_owned(), t.rows[i][seed].to_owned());
                let c = counters.entry(key).or_insert(0);
                samples.push((t.rows[i][scheme].to_owned(), *c as f64, t.num(i, reward)?));
                *c += 1;
            }
        }
        PlotKind::Power | PlotKind::Elements => {
            let (rate, status) = (t.col("sum_rate")?, t.col("status")?);
            let (x_col, surface, amax) = if kind == PlotKind::Power {
                (t.col("power_dbm")?, None, None)
            } else {
                (t.col("n")?, Some(t.col("surface")?), Some(t.col("a_max")?))
            };
            for i in 0..t.rows.len() {
                if &t.rows[i][status] != STATUS_OK {
                    continue;
                }
                let mut label = t.rows[i][scheme].to_owned();
                if let (Some(s), Some(a)) = (surface, amax) {
                    label = match &t.rows[i][s] {
                        "hris" => format!("{label}/hris/amax={}", &t.rows[i][a]),
                        other => format!("{label}/{other}"),
                    };
                }
                samples.push((label, t.num(i, x_col)?, t.num(i, rate)?));
            }
        }
    }
    let out = average(samples);
    if out.is_empty() {
        return Err(Error::Csv("no successful rows to plot".into()));
    }
    Ok(out)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{}", (v * 1e3).round() / 1e3)
    } else {
        format!("{v:.2e}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// Renders a line chart with axes, ticks and a legend.
pub fn render_svg(series: &[Series], kind: PlotKind) -> Result<String> {
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
    if series
        .iter()
        .all(|s| s.points.iter().filter(finite).count() == 0)
    {
        return Err(Error::Csv("nothing finite to plot".into()));
    }
    let (x0, x1) = range(
        series
            .iter()
            .flat_map(|s| s.points.iter().filter(finite).map(|p| p.0)),
    );
    let (y0, y1) = range(
        series
            .iter()
            .flat_map(|s| s.points.iter().filter(finite).map(|p| p.1)),
    );
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let (xl, yl) = kind.labels();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ccc"/>"##,
            TOP,
            TOP + ph
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ccc"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(xl)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(yl)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(finite)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if kind != PlotKind::Reward {
            for &(x, y) in s.points.iter().filter(finite) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads `csv_path`, renders the figure and writes it to `out` (default:
/// the CSV path with an `.svg` extension).
pub fn cmd_plot(
    csv_path: &Path,
    kind: PlotKind,
    out: Option<&Path>,
    force: bool,
) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv_path)?;
    let svg = render_svg(&series_from_csv(&text, kind)?, kind)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv_path.with_extension("svg"));
    guard_outputs(&[&out], force)?;
    std::fs::write(&out, svg)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POWER: &str =
        "config_hash,seed,scheme,power_dbm,best_reward,final_mean_reward,sum_rate,crb,status\n\
        h,1,ddpg,20,-1,-1,1.0,1,ok\n\
        h,2,ddpg,20,-1,-1,3.0,1,ok\n\
        h,1,ddpg,30,-1,-1,4.0,1,ok\n\
        h,2,ddpg,30,NaN,NaN,NaN,NaN,error: boom\n";

    #[test]
    fn empty_csv_is_an_error() {
        assert!(matches!(
            series_from_csv("", PlotKind::Power),
            Err(Error::Csv(_))
        ));
        let header_only = POWER.lines().next().unwrap();
        assert!(series_from_csv(header_only, PlotKind::Power).is_err());
    }

    #[test]
    fn missing_column_is_named() {
        let err = series_from_csv("scheme,seed\nddpg,1\n", PlotKind::Reward).unwrap_err();
        assert!(err.to_string().contains("reward"));
    }

    #[test]
    fn power_means_skip_failed_cells() {
        let s = series_from_csv(POWER, PlotKind::Power).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].points, vec![(20.0, 2.0), (30.0, 4.0)]);
    }

    #[test]
    fn single_series_renders_one_polyline_deterministically() {
        let a = render_svg(
            &series_from_csv(POWER, PlotKind::Power).unwrap(),
            PlotKind::Power,
        )
        .unwrap();
        let b = render_svg(
            &series_from_csv(POWER, PlotKind::Power).unwrap(),
            PlotKind::Power,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("<polyline").count(), 1);
        assert!(a.contains("BS power (dBm)"));
    }

    #[test]
    fn reward_kind_averages_seeds_per_step() {
        let csv = "scheme,seed,reward\nddpg,1,1\nddpg,1,2\nddpg,2,3\nddpg,2,4\nrandom,1,0\n";
        let s = series_from_csv(csv, PlotKind::Reward).unwrap();
        assert_eq!(s[0].points, vec![(0.0, 2.0), (1.0, 3.0)]);
        assert_eq!(s[1].label, "random");
    }

    #[test]
    fn elements_labels_carry_surface() {
        let csv = "scheme,surface,n,a_max,sum_rate,status\nrandom,hris,8,5,1,ok\nrandom,passive,8,1,0.5,ok\n";
        let labels: Vec<_> = series_from_csv(csv, PlotKind::Elements)
            .unwrap()
            .into_iter()
            .map(|s| s.label)
            .collect();
        assert_eq!(labels, vec!["random/hris/amax=5", "random/passive"]);
    }

    #[test]
    fn labels_are_escaped() {
        let s = [Series {
            label: "a<b".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0)],
        }];
        assert!(render_svg(&s, PlotKind::Reward).unwrap().contains("a&lt;b"));
    }
}
