//! SVG figures from result CSVs and run directories.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use omsync_core::orchestrate::{load_run, SNAPSHOT_FILE};

use crate::svg::{diverging, finite_range, sequential, Axis, Plot, PALETTE};

/// Grids with more cells than this only get summary figures.
pub const PER_CELL_FIGURE_LIMIT: usize = 16;

/// A CSV file as strings; `#` comment lines are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let body: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| anyhow!("missing column `{name}`"))
    }

    pub fn strs(&self, name: &str) -> Result<Vec<&str>> {
        let k = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    /// Column as numbers; empty cells become NaN.
    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        self.strs(name)?
            .into_iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>()
                        .map_err(|_| anyhow!("column `{name}`: `{s}` is not a number"))
                }
            })
            .collect()
    }

    /// Sweep axis names of a summary or cell table.
    pub fn axes(&self) -> Vec<String> {
        let d = self
            .columns
            .iter()
            .take_while(|c| *c == "i" || *c == "j")
            .count();
        self.columns[d..2 * d].to_vec()
    }
}

pub fn histogram_svg(t: &Table, title: &str) -> Result<String> {
    let lo = t.f64s("bin_lo")?;
    let hi = t.f64s("bin_hi")?;
    let d = t.f64s("density")?;
    if d.is_empty() {
        bail!("empty histogram");
    }
    let top = finite_range(d.iter().copied())
        .map_or(1.0, |r| r.1)
        .max(1e-12);
    let mut p = Plot::new(
        title,
        "relative phase δφ",
        "probability density",
        Axis::linear(-PI, PI),
        Axis::linear(0.0, 1.05 * top),
    );
    let bars: Vec<(f64, f64, f64)> = lo
        .iter()
        .zip(&hi)
        .zip(&d)
        .map(|((a, b), v)| (*a, *b, *v))
        .collect();
    p.bars(&bars, PALETTE[0]);
    Ok(p.finish())
}

/// Phase against time, thinned to at most `max_points`, with the line broken
/// at wraps.
pub fn phase_trace_svg(t: &Table, title: &str, max_points: usize) -> Result<String> {
    let time = t.f64s("t")?;
    let phi = t.f64s("delta_phi")?;
    let defined = t.strs("defined")?;
    let step = time.len().div_ceil(max_points.max(1)).max(1);
    let pts: Vec<(f64, f64)> = (0..time.len())
        .step_by(step)
        .map(|i| (time[i], if defined[i] == "1" { phi[i] } else { f64::NAN }))
        .collect();
    let (a, b) = finite_range(time.iter().copied()).unwrap_or((0.0, 1.0));
    let mut p = Plot::new(
        title,
        "time",
        "relative phase δφ",
        Axis::linear(a, b),
        Axis::linear(-PI, PI),
    );
    p.line_broken(&pts, PALETTE[0], None, |a, b| (a - b).abs() > PI);
    Ok(p.finish())
}

/// Histogram of dwell durations per state on a log count axis.
pub fn residence_svg(t: &Table, title: &str) -> Result<String> {
    let state = t.strs("state")?;
    let dur = t.f64s("duration")?;
    let censored = t.strs("censored")?;
    let (_, hi) = finite_range(dur.iter().copied()).ok_or_else(|| anyhow!("no dwell intervals"))?;
    let bins = 30;
    let width = hi / bins as f64;
    let mut counts = [vec![0u64; bins], vec![0u64; bins]];
    for i in 0..dur.len() {
        if censored[i] == "1" {
            continue;
        }
        let k = ((dur[i] / width) as usize).min(bins - 1);
        counts[usize::from(state[i] == "pi")][k] += 1;
    }
    let max = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let mut p = Plot::new(
        title,
        "dwell duration",
        "count",
        Axis::linear(0.0, hi),
        Axis::log(0.5, max),
    );
    for (s, (name, color)) in [("0-state", PALETTE[1]), ("π-state", PALETTE[0])]
        .iter()
        .enumerate()
    {
        let pts: Vec<(f64, f64)> = counts[s]
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                (
                    (k as f64 + 0.5) * width,
                    if c > 0 { c as f64 } else { f64::NAN },
                )
            })
            .collect();
        p.line(&pts, color, Some(name));
    }
    Ok(p.finish())
}

/// Effective potential of the reduced phase model.
pub fn potential_svg(t: &Table, title: &str) -> Result<String> {
    let x = t.f64s("delta_phi")?;
    let u = t.f64s("u")?;
    let mut p = Plot::new(
        title,
        "relative phase δφ",
        "effective potential U",
        Axis::linear(-PI, PI),
        Axis::fit(u.iter().copied()),
    );
    p.line(&x.into_iter().zip(u).collect::<Vec<_>>(), PALETTE[0], None);
    Ok(p.finish())
}

/// Normalized correlator of a quantum-jump ensemble against time.
pub fn mcwf_svg(t: &Table, title: &str) -> Result<String> {
    let time = t.f64s("t")?;
    let re = t.f64s("c_re")?;
    let im = t.f64s("c_im")?;
    let (a, b) = finite_range(time.iter().copied()).unwrap_or((0.0, 1.0));
    let mut p = Plot::new(
        title,
        "time",
        "correlator",
        Axis::linear(a, b),
        Axis::linear(-1.0, 1.0),
    );
    p.line(
        &time.iter().copied().zip(re).collect::<Vec<_>>(),
        PALETTE[1],
        Some("Re C"),
    );
    p.line(
        &time.iter().copied().zip(im).collect::<Vec<_>>(),
        PALETTE[0],
        Some("Im C"),
    );
    Ok(p.finish())
}

/// Residence times against the single sweep axis, log time axis.
pub fn tau_curves_svg(t: &Table, title: &str) -> Result<String> {
    let axis = single_axis(t)?;
    let x = t.f64s(&axis)?;
    let series = [
        ("tau0", "tau0_stderr", "τ0", PALETTE[1]),
        ("tau_pi", "tau_pi_stderr", "τπ", PALETTE[0]),
    ];
    let mut all = Vec::new();
    for (m, _, _, _) in series {
        all.extend(t.f64s(m)?.into_iter().filter(|v| *v > 0.0));
    }
    let (lo, hi) = finite_range(all).unwrap_or((1.0, 10.0));
    let (xa, xb) = finite_range(x.iter().copied()).unwrap_or((0.0, 1.0));
    let mut p = Plot::new(
        title,
        &axis,
        "mean residence time",
        Axis::linear(xa, xb),
        Axis::log(lo, hi),
    );
    for (m, e, name, color) in series {
        let y = t.f64s(m)?;
        let err = t.f64s(e)?;
        let pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        p.line(&pts, color, Some(name));
        let with_err: Vec<(f64, f64, f64)> = (0..x.len()).map(|i| (x[i], y[i], err[i])).collect();
        p.points(&with_err, color);
    }
    Ok(p.finish())
}

/// A numeric summary column against the single sweep axis.
pub fn curve_svg(
    t: &Table,
    column: &str,
    err_column: Option<&str>,
    title: &str,
    log_y: bool,
) -> Result<String> {
    let axis = single_axis(t)?;
    let x = t.f64s(&axis)?;
    let y = t.f64s(column)?;
    let err = match err_column {
        Some(e) => t.f64s(e)?,
        None => vec![f64::NAN; y.len()],
    };
    let (xa, xb) = finite_range(x.iter().copied()).unwrap_or((0.0, 1.0));
    let yaxis = if log_y {
        let (a, b) = finite_range(y.iter().copied().filter(|v| *v > 0.0)).unwrap_or((1.0, 10.0));
        Axis::log(a, b)
    } else if column == "mean_cos" || column == "mean_sin" {
        Axis::linear(-1.0, 1.0)
    } else {
        Axis::fit(
            y.iter()
                .zip(&err)
                .flat_map(|(v, e)| [v - e.max(0.0), v + e.max(0.0), *v]),
        )
    };
    let mut p = Plot::new(title, &axis, column, Axis::linear(xa, xb), yaxis);
    let pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    p.line(&pts, PALETTE[0], None);
    p.points(
        &(0..x.len())
            .map(|i| (x[i], y[i], err[i]))
            .collect::<Vec<_>>(),
        PALETTE[0],
    );
    Ok(p.finish())
}

fn single_axis(t: &Table) -> Result<String> {
    match t.axes().as_slice() {
        [a] => Ok(a.clone()),
        other => bail!("expected a one-axis sweep, found {} axes", other.len()),
    }
}

/// Cell edges halfway between sorted axis values.
fn edges(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        let h = if values[0] == 0.0 {
            0.5
        } else {
            0.5 * values[0].abs()
        };
        return vec![values[0] - h, values[0] + h];
    }
    let mut e = Vec::with_capacity(n + 1);
    e.push(values[0] - 0.5 * (values[1] - values[0]));
    for w in values.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(values[n - 1] + 0.5 * (values[n - 1] - values[n - 2]));
    e
}

pub fn regime_color(label: &str) -> &'static str {
    match label {
        "zero-sync" => "#b2182b",
        "pi-sync" => "#2166ac",
        "mixed" | "bistable" => "#9467bd",
        "drift" => "#969696",
        _ => "#f0f0f0",
    }
}

pub enum HeatScale {
    /// Diverging over [−1, 1].
    Correlator,
    /// Sequential over the column's finite range, logarithmic if requested.
    Sequential { log: bool },
    /// Categorical regime labels.
    Regime,
}

/// Two-axis map of `column`; the first axis runs along x.
pub fn heat_map_svg(t: &Table, column: &str, scale: HeatScale, title: &str) -> Result<String> {
    let axes = t.axes();
    if axes.len() != 2 {
        bail!("expected a two-axis sweep, found {} axes", axes.len());
    }
    let i: Vec<usize> = t
        .strs("i")?
        .iter()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()?;
    let j: Vec<usize> = t
        .strs("j")?
        .iter()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()?;
    let xs = t.f64s(&axes[0])?;
    let ys = t.f64s(&axes[1])?;
    let (ni, nj) = (
        i.iter().max().map_or(0, |m| m + 1),
        j.iter().max().map_or(0, |m| m + 1),
    );
    let mut xv = vec![f64::NAN; ni];
    let mut yv = vec![f64::NAN; nj];
    for r in 0..t.rows.len() {
        xv[i[r]] = xs[r];
        yv[j[r]] = ys[r];
    }
    if xv.iter().chain(&yv).any(|v| v.is_nan()) {
        bail!("sweep grid is incomplete");
    }
    let (ex, ey) = (edges(&xv), edges(&yv));
    let mut p = Plot::new(
        title,
        &axes[0],
        &axes[1],
        Axis::linear(ex[0].min(ex[ni]), ex[0].max(ex[ni])),
        Axis::linear(ey[0].min(ey[nj]), ey[0].max(ey[nj])),
    );
    let status = t.strs("status")?;
    match scale {
        HeatScale::Regime => {
            let labels = t.strs(column)?;
            for r in 0..t.rows.len() {
                let l = if status[r] == "ok" {
                    labels[r]
                } else {
                    "failed"
                };
                p.rect(
                    ex[i[r]],
                    ex[i[r] + 1],
                    ey[j[r]],
                    ey[j[r] + 1],
                    regime_color(l),
                    l,
                );
            }
            let mut seen: Vec<&str> = Vec::new();
            for (r, l) in labels.iter().enumerate() {
                let l = if status[r] == "ok" { *l } else { "failed" };
                if !seen.contains(&l) {
                    seen.push(l);
                }
            }
            seen.sort_unstable();
            p.key(
                &seen
                    .iter()
                    .map(|l| (*l, regime_color(l)))
                    .collect::<Vec<_>>(),
            );
        }
        HeatScale::Correlator => {
            p = p.with_colorbar();
            let v = t.f64s(column)?;
            for r in 0..t.rows.len() {
                p.rect(
                    ex[i[r]],
                    ex[i[r] + 1],
                    ey[j[r]],
                    ey[j[r] + 1],
                    &diverging(v[r]),
                    &format!("{column} = {}", v[r]),
                );
            }
            p.colorbar(-1.0, 1.0, diverging);
        }
        HeatScale::Sequential { log } => {
            p = p.with_colorbar();
            let v = t.f64s(column)?;
            let tr = |x: f64| if log { x.log10() } else { x };
            let (lo, hi) = finite_range(v.iter().map(|x| tr(*x))).unwrap_or((0.0, 1.0));
            let span = if hi > lo { hi - lo } else { 1.0 };
            for r in 0..t.rows.len() {
                let f = (tr(v[r]) - lo) / span;
                p.rect(
                    ex[i[r]],
                    ex[i[r] + 1],
                    ey[j[r]],
                    ey[j[r] + 1],
                    &sequential(f),
                    &format!("{column} = {}", v[r]),
                );
            }
            p.colorbar(lo, hi, move |x| sequential((x - lo) / span));
        }
    }
    Ok(p.finish())
}

fn write(out: &Path, name: &str, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

/// Figures for a summary table (from `summary.csv` or assembled cells).
pub fn render_summary(t: &Table, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    match t.axes().len() {
        1 => {
            if t.has("tau0") {
                write(
                    out,
                    "summary.tau.svg",
                    tau_curves_svg(t, "Residence times")?,
                    written,
                )?;
            }
            if t.has("mean_cos") {
                let svg = curve_svg(
                    t,
                    "mean_cos",
                    Some("mean_cos_stderr"),
                    "Synchronization measure",
                    false,
                )?;
                write(out, "summary.mean_cos.svg", svg, written)?;
            }
            if t.has("n_th_star") {
                write(
                    out,
                    "summary.n_th_star.svg",
                    curve_svg(t, "n_th_star", None, "Crossover occupancy", true)?,
                    written,
                )?;
            }
            if t.has("energy") {
                write(
                    out,
                    "summary.energy.svg",
                    curve_svg(t, "energy", None, "Oscillation energy", false)?,
                    written,
                )?;
            }
        }
        2 => {
            if t.has("mean_cos") {
                let svg = heat_map_svg(t, "mean_cos", HeatScale::Correlator, "⟨cos δφ⟩")?;
                write(out, "summary.mean_cos.svg", svg, written)?;
            }
            if t.has("regime") {
                write(
                    out,
                    "summary.regime.svg",
                    heat_map_svg(t, "regime", HeatScale::Regime, "Regimes")?,
                    written,
                )?;
            }
            if t.has("energy") {
                let svg = heat_map_svg(
                    t,
                    "energy",
                    HeatScale::Sequential { log: false },
                    "Oscillation energy",
                )?;
                write(out, "summary.energy.svg", svg, written)?;
            }
            if t.has("n_th_star") {
                let svg = heat_map_svg(
                    t,
                    "n_th_star",
                    HeatScale::Sequential { log: true },
                    "log10 crossover occupancy",
                )?;
                write(out, "summary.n_th_star.svg", svg, written)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Renders one CSV file, choosing the figure from its columns.
pub fn render_csv(path: &Path, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let t = Table::read(path)?;
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("figure.csv");
    let stem = name.strip_suffix(".csv").unwrap_or(name);
    let cols: Vec<&str> = t.columns.iter().map(String::as_str).collect();
    match cols.as_slice() {
        ["bin_lo", "bin_hi", "count", "density"] => write(
            out,
            &format!("{stem}.svg"),
            histogram_svg(&t, stem)?,
            written,
        ),
        ["t", "delta_phi", "defined"] => write(
            out,
            &format!("{stem}.svg"),
            phase_trace_svg(&t, stem, 5000)?,
            written,
        ),
        ["delta_phi", "u", "rhs"] => write(
            out,
            &format!("{stem}.svg"),
            potential_svg(&t, stem)?,
            written,
        ),
        ["state", "start", "end", "duration", "censored"] => write(
            out,
            &format!("{stem}.svg"),
            residence_svg(&t, stem)?,
            written,
        ),
        _ if t.has("c_re") && t.has("c_defined") => {
            write(out, &format!("{stem}.svg"), mcwf_svg(&t, stem)?, written)
        }
        _ if t.has("status") => render_summary(&t, out, written),
        _ => bail!(
            "{}: no figure for columns {}",
            path.display(),
            t.columns.join(",")
        ),
    }
}

/// Renders a run directory: summary figures, plus per-cell figures for small
/// grids.
pub fn render_run(dir: &Path, out: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let run = load_run(dir).with_context(|| format!("loading run {}", dir.display()))?;
    if run.cells.is_empty() {
        bail!("{}: no finished cells", dir.display());
    }
    let table = Table {
        columns: run.columns.clone(),
        rows: run.cells.iter().map(|c| c.row()).collect(),
    };
    render_summary(&table, out, written)?;
    if run.cells.len() + run.pending <= PER_CELL_FIGURE_LIMIT {
        let cells = dir.join(omsync_core::orchestrate::CELLS_DIR);
        let mut files: Vec<PathBuf> = fs::read_dir(&cells)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::result::Result<_, _>>()?;
        files.sort();
        for f in files {
            let name = f.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            let figure = [".hist.csv", ".residence.csv", ".mcwf.csv", ".potential.csv"]
                .iter()
                .any(|s| name.ends_with(s))
                || name.contains(".phase_");
            if figure && name.ends_with(".csv") {
                // Figures are best effort per cell: a run with no switches has
                // no dwell histogram.
                if let Err(e) = render_csv(&f, out, written) {
                    eprintln!("skipping {}: {e:#}", f.display());
                }
            }
        }
    }
    Ok(())
}

/// Renders a run directory or a single CSV into `out`.
pub fn render_path(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    if input.is_dir() {
        if !input.join(SNAPSHOT_FILE).exists() {
            bail!(
                "{} is not a run directory (no {SNAPSHOT_FILE})",
                input.display()
            );
        }
        render_run(input, out, &mut written)?;
    } else {
        render_csv(input, out, &mut written)?;
    }
    Ok(written)
}
