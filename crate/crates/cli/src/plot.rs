//! `m3p plot`: SVG regret curves from the CSV ledgers written by `simulate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Directory holding `run_*.csv` ledgers.
    #[arg(long)]
    pub input: PathBuf,
    /// SVG file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Maximum points per curve.
    #[arg(long, default_value_t = 400)]
    pub points: usize,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;

/// `(t, cum_regret)` pairs from one ledger.
pub fn read_ledger(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CliError::invalid(format!("{}: empty ledger", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::invalid(format!("{}: missing column {name}", path.display())))
    };
    let (ti, ri) = (idx("t")?, idx("cum_regret")?);
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let get = |j: usize| fields.get(j).and_then(|v| v.parse::<f64>().ok());
            match (get(ti), get(ri)) {
                (Some(t), Some(r)) => Ok((t, r)),
                _ => Err(CliError::invalid(format!(
                    "{}: malformed row {}",
                    path.display(),
                    i + 1
                ))),
            }
        })
        .collect()
}

fn thin(curve: &[(f64, f64)], points: usize) -> Vec<(f64, f64)> {
    if curve.len() <= points || points < 2 {
        return curve.to_vec();
    }
    let step = (curve.len() - 1) as f64 / (points - 1) as f64;
    (0..points).map(|i| curve[(i as f64 * step).round() as usize]).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn render(curves: &[Vec<(f64, f64)>], points: usize) -> String {
    let t_max = curves.iter().flat_map(|c| c.last()).map(|p| p.0).fold(1.0, f64::max);
    let r_max = curves.iter().flatten().map(|p| p.1).fold(0.0, f64::max).max(1e-12);
    let sx = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / t_max;
    let sy = |r: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * r / r_max;
    let path = |pts: &[(f64, f64)]| {
        pts.iter()
            .enumerate()
            .map(|(i, &(t, r))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(t), sy(r)))
            .collect::<String>()
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{b}" x2="{m}" y2="{m}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="12"><text x="{}" y="{}" text-anchor="middle">period t (max {t_max})</text><text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">cumulative regret (max {r_max:.3})</text></g>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        20.0,
        HEIGHT / 2.0,
        20.0,
        HEIGHT / 2.0
    );
    for c in curves {
        let _ = writeln!(
            svg,
            r##"<path d="{}" fill="none" stroke="#9db4d0" stroke-width="1"/>"##,
            path(&thin(c, points))
        );
    }
    let shortest = curves.iter().map(Vec::len).min().unwrap_or(0);
    if curves.len() > 1 && shortest > 0 {
        let med: Vec<(f64, f64)> = (0..shortest)
            .map(|i| (curves[0][i].0, median(curves.iter().map(|c| c[i].1).collect())))
            .collect();
        let _ = writeln!(
            svg,
            r##"<path d="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
            path(&thin(&med, points))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn run(args: PlotArgs) -> CliResult<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.input)
        .map_err(|e| CliError::invalid(format!("{}: {e}", args.input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("run_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::invalid(format!(
            "{}: no run_*.csv ledgers found",
            args.input.display()
        )));
    }
    let curves = files.iter().map(|f| read_ledger(f)).collect::<CliResult<Vec<_>>>()?;
    fs::write(&args.output, render(&curves, args.points))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_median_and_runs() {
        let a = vec![(1.0, 0.5), (2.0, 1.0), (3.0, 1.2)];
        let b = vec![(1.0, 0.1), (2.0, 0.3), (3.0, 0.4)];
        let svg = render(&[a, b], 100);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let c: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64, i as f64)).collect();
        let t = thin(&c, 10);
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], c[0]);
        assert_eq!(t[9], c[999]);
    }
}
