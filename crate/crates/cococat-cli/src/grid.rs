//! Grid flag parsing: a comma-separated value list, or an inclusive
//! evenly spaced range written `start:stop:count`.

use crate::errors::{CliError, CliResult};

/// Parses a grid specification. `"0.4,2,4"` gives the listed values in
/// order; `"0.4:4:10"` gives ten evenly spaced values from 0.4 to 4
/// inclusive. A one-point range must have equal endpoints.
pub fn parse_grid(flag: &str, spec: &str) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CliError::usage(format!("--{flag}: empty grid specification")));
    }
    if spec.contains(':') {
        parse_range(flag, spec)
    } else {
        spec.split(',')
            .map(|token| parse_value(flag, token))
            .collect()
    }
}

fn parse_value(flag: &str, token: &str) -> CliResult<f64> {
    let value: f64 = token
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("--{flag}: cannot parse value '{token}'")))?;
    if !value.is_finite() {
        return Err(CliError::usage(format!("--{flag}: value '{token}' is not finite")));
    }
    Ok(value)
}

fn parse_range(flag: &str, spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!(
            "--{flag}: a range is start:stop:count, got '{spec}'"
        )));
    }
    let start = parse_value(flag, parts[0])?;
    let stop = parse_value(flag, parts[1])?;
    let count: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("--{flag}: cannot parse count '{}'", parts[2])))?;
    match count {
        0 => Err(CliError::usage(format!("--{flag}: range count must be at least 1"))),
        1 => {
            if start == stop {
                Ok(vec![start])
            } else {
                Err(CliError::usage(format!(
                    "--{flag}: a one-point range needs start = stop, got '{spec}'"
                )))
            }
        }
        _ => {
            let last = count - 1;
            Ok((0..count)
                .map(|i| {
                    if i == last {
                        stop
                    } else {
                        start + (stop - start) * i as f64 / last as f64
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comma_lists_keep_order_and_values() {
        assert_eq!(parse_grid("d1", "0.4,2,4").unwrap(), vec![0.4, 2.0, 4.0]);
        assert_eq!(parse_grid("d1", " 5 ").unwrap(), vec![5.0]);
        assert_eq!(parse_grid("d1", "3,1,2").unwrap(), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn ranges_are_inclusive_and_evenly_spaced() {
        let grid = parse_grid("d2", "0.4:4:10").unwrap();
        assert_eq!(grid.len(), 10);
        assert_eq!(grid[0], 0.4);
        assert_eq!(grid[9], 4.0);
        for pair in grid.windows(2) {
            assert!((pair[1] - pair[0] - 0.4).abs() < 1e-12);
        }
        assert_eq!(parse_grid("nu", "2:2:1").unwrap(), vec![2.0]);
        assert_eq!(parse_grid("nu", "1:0:2").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn malformed_specifications_are_usage_errors() {
        for bad in ["", " ", "1,,2", "1,x", "1:2", "1:2:3:4", "1:2:0", "1:2:1", "inf", "nan,1"] {
            let err = parse_grid("d1", bad).unwrap_err();
            assert_eq!(err.code, crate::errors::EXIT_CONFIG, "spec '{bad}'");
        }
    }
}
