//! Size sweeps such as `1e3..1e6`, `5,10,20` or `5..100,150`.

use anyhow::{bail, Context, Result};

fn parse_size(s: &str) -> Result<usize> {
    let v: f64 = s.trim().parse().with_context(|| format!("`{s}` is not a number"))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64) {
        bail!("`{s}` is not a positive integer");
    }
    Ok(v as usize)
}

/// `1, 2, 5` times each power of ten within `[lo, hi]`, plus both endpoints.
fn one_two_five(lo: usize, hi: usize) -> Vec<usize> {
    let mut out = vec![lo];
    let mut decade = 1usize;
    while decade <= hi {
        for m in [1, 2, 5] {
            let v = decade.saturating_mul(m);
            if v > lo && v < hi {
                out.push(v);
            }
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if hi > lo {
        out.push(hi);
    }
    out
}

/// Parses a comma-separated list of sizes and `lo..hi` ranges. The result is
/// sorted and free of duplicates.
pub fn parse_sweep(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in spec.split(',') {
        let item = item.trim();
        if item.is_empty() {
            bail!("empty entry in sweep `{spec}`");
        }
        match item.split_once("..") {
            Some((a, b)) => {
                let (lo, hi) = (parse_size(a)?, parse_size(b)?);
                if lo > hi {
                    bail!("range `{item}` is empty");
                }
                out.extend(one_two_five(lo, hi));
            }
            None => out.push(parse_size(item)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decades() {
        assert_eq!(
            parse_sweep("1e3..1e4").unwrap(),
            vec![1000, 2000, 5000, 10_000]
        );
        assert_eq!(parse_sweep("5..100").unwrap(), vec![5, 10, 20, 50, 100]);
        assert_eq!(parse_sweep("7..7").unwrap(), vec![7]);
        assert_eq!(parse_sweep("3..30").unwrap(), vec![3, 5, 10, 20, 30]);
    }

    #[test]
    fn lists_merge() {
        assert_eq!(parse_sweep("10, 5,5..10").unwrap(), vec![5, 10]);
    }

    #[test]
    fn rejects_bad_input() {
        for s in ["", "0", "10..5", "abc", "1.5", "-3", "1..", "5,,6"] {
            assert!(parse_sweep(s).is_err(), "{s}");
        }
    }
}
