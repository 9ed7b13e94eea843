use std::fs;
use std::io::Write;
use std::path::Path;

use super::HarnessError;

pub const EPISODES_HEADER: &str = "episode,max_abs_theta,max_abs_thetadot,accumulated_cost";
pub const STEPS_HEADER: &str = "episode,t,theta,theta_dot,a_rl,a_prior,a_cbf,a_total,reward,status";
pub const SAFETY_HEADER: &str = "episode,violations,sos_ok,fallback_saturate,infeasible";
pub const TIMING_HEADER: &str = "episode,t,solve_time_s";
pub const SUMMARY_HEADER: &str = "episode,seeds,median_max_abs_theta,max_max_abs_theta,median_max_abs_thetadot,\
max_max_abs_thetadot,median_accumulated_cost,max_accumulated_cost";

/// Steps kept in the first/last episode extracts.
pub const EXTRACT_STEPS: usize = 50;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the last `window` values at every index (fewer at the start).
pub fn trailing_median(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window.max(1));
            median(&mut values[lo..=i].to_vec())
        })
        .collect()
}

/// Per-episode rows across seeds: `(episode, seeds, [median, max] of each
/// column)`.
pub fn summarize(per_seed: &[Vec<(usize, [f64; 3])>]) -> Vec<(usize, usize, [f64; 6])> {
    let episodes = per_seed.iter().flat_map(|s| s.iter().map(|(e, _)| *e)).max().map_or(0, |m| m + 1);
    let mut out = Vec::new();
    for ep in 0..episodes {
        let vals: Vec<[f64; 3]> =
            per_seed.iter().filter_map(|s| s.iter().find(|(e, _)| *e == ep).map(|(_, v)| *v)).collect();
        if vals.is_empty() {
            continue;
        }
        let mut row = [0.0; 6];
        for c in 0..3 {
            let mut col: Vec<f64> = vals.iter().map(|v| v[c]).collect();
            row[2 * c + 1] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row[2 * c] = median(&mut col);
        }
        out.push((ep, vals.len(), row));
    }
    out
}

pub fn write_summary(path: &Path, per_seed: &[Vec<(usize, [f64; 3])>]) -> Result<(), HarnessError> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for (ep, n, r) in summarize(per_seed) {
        text.push_str(&format!("{ep},{n},{},{},{},{},{},{}\n", r[0], r[1], r[2], r[3], r[4], r[5]));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let err = |msg: String| HarnessError::Report { path: path.display().to_string(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(err("unexpected header".into()));
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<String> = l.split(',').map(str::to_string).collect();
            if cols.len() == width {
                Ok(cols)
            } else {
                Err(err(format!("row {} has {} columns", i + 1, cols.len())))
            }
        })
        .collect()
}

/// Per-seed data read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedReport {
    /// `(episode, [max_abs_theta, max_abs_thetadot, accumulated_cost])`
    pub episodes: Vec<(usize, [f64; 3])>,
    /// `(episode, [violations, sos_ok, fallback_saturate, infeasible])`
    pub safety: Vec<(usize, [usize; 4])>,
    pub partial: Option<String>,
}

pub fn read_seed_dir(dir: &Path) -> Result<SeedReport, HarnessError> {
    let bad = |p: &Path, m: &str| HarnessError::Report { path: p.display().to_string(), msg: m.into() };
    let ep_path = dir.join("episodes.csv");
    let mut episodes = Vec::new();
    for row in read_rows(&ep_path, EPISODES_HEADER)? {
        let e = row[0].parse().map_err(|_| bad(&ep_path, "episode index"))?;
        let mut v = [0.0; 3];
        for c in 0..3 {
            v[c] = row[c + 1].parse().map_err(|_| bad(&ep_path, "number"))?;
        }
        episodes.push((e, v));
    }
    let sf_path = dir.join("safety.csv");
    let mut safety = Vec::new();
    for row in read_rows(&sf_path, SAFETY_HEADER)? {
        let e = row[0].parse().map_err(|_| bad(&sf_path, "episode index"))?;
        let mut v = [0usize; 4];
        for c in 0..4 {
            v[c] = row[c + 1].parse().map_err(|_| bad(&sf_path, "count"))?;
        }
        safety.push((e, v));
    }
    let partial = fs::read_to_string(dir.join("PARTIAL")).ok();
    Ok(SeedReport { episodes, safety, partial })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_two_is_mean() {
        let rows = summarize(&[vec![(0, [0.5, 1.0, 10.0])], vec![(0, [0.7, 3.0, 20.0])]]);
        assert_eq!(rows.len(), 1);
        let (ep, n, r) = rows[0];
        assert_eq!((ep, n), (0, 2));
        assert!((r[0] - 0.6).abs() < 1e-15 && r[1] == 0.7);
        assert!((r[2] - 2.0).abs() < 1e-15 && r[3] == 3.0);
        assert!((r[4] - 15.0).abs() < 1e-15 && r[5] == 20.0);
    }

    #[test]
    fn trailing_median_window() {
        let v = [5.0, 1.0, 3.0, 2.0, 8.0];
        assert_eq!(trailing_median(&v, 3), vec![5.0, 3.0, 3.0, 2.0, 3.0]);
    }
}
