use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lagflow_core::flow::Diagnostics;
use lagflow_core::ImmersionField;
use serde::Serialize;

/// Write through a sibling temp file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = lagflow_core::json::to_string_precise(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Columns: `t, area, omega_max, H_sq_max, min_eig_g, period_1..period_n`.
pub fn diagnostics_csv(rows: &[Diagnostics], n: usize) -> String {
    let mut out = String::from("t,area,omega_max,H_sq_max,min_eig_g");
    for k in 1..=n {
        let _ = write!(out, ",period_{k}");
    }
    out.push('\n');
    for d in rows {
        let mut cells = vec![
            num(d.t),
            num(d.area),
            num(d.omega_max),
            num(d.h_sq_max),
            num(d.min_eig_g),
        ];
        cells.extend(d.periods.iter().map(|p| num(*p)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Columns: `axis, theta_period, psi_period`.
pub fn periods_csv(theta: &[f64], psi: &[f64]) -> String {
    let mut out = String::from("axis,theta_period,psi_period\n");
    for (k, (a, b)) in theta.iter().zip(psi).enumerate() {
        let _ = writeln!(out, "{},{},{}", k + 1, num(*a), num(*b));
    }
    out
}

/// Closed polyline of a curve in `C`, with winding directions reduced
/// modulo their period.
pub fn curve_svg(f: &ImmersionField, t: f64) -> String {
    let grid = f.grid();
    let tau = std::f64::consts::TAU;
    let periods: Vec<f64> = (0..2).map(|a| tau * f.winding_entry(a, 0).abs()).collect();
    let pts: Vec<[f64; 2]> = (0..grid.node_count())
        .map(|p| {
            let x = f.position(p);
            let mut q = [x[0], x[1]];
            for a in 0..2 {
                if periods[a] > 0.0 {
                    q[a] = q[a].rem_euclid(periods[a]);
                }
            }
            q
        })
        .collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in &pts {
        for a in 0..2 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let (w, h) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
    let points: Vec<String> = pts
        .iter()
        .map(|q| format!("{:.6},{:.6}", q[0], -q[1]))
        .collect();
    let closed = if periods.iter().all(|p| *p == 0.0) {
        "polygon"
    } else {
        "polyline"
    };
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n\
         <title>t = {t}</title>\n\
         <{closed} fill=\"none\" stroke=\"black\" stroke-width=\"{:.6}\" points=\"{}\"/>\n\
         </svg>\n",
        lo[0] - pad,
        -hi[1] - pad,
        w,
        h,
        0.005 * w.max(h),
        points.join(" ")
    )
}
