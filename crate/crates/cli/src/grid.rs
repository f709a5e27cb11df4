//! Grid arguments: comma lists plus `lin:lo:hi:n` and `log:lo:hi:n` ranges.

fn parse_f64(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(m) = s.strip_suffix("pi") {
        let m = m.trim_end_matches('*');
        let factor = if m.is_empty() { 1.0 } else { parse_f64(m)? };
        return Ok(factor * std::f64::consts::PI);
    }
    s.parse::<f64>().map_err(|_| format!("not a number: `{s}`"))
}

fn range(spec: &str) -> Result<Option<Vec<f64>>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let kind = parts[0];
    if kind != "lin" && kind != "log" {
        return Ok(None);
    }
    if parts.len() != 4 {
        return Err(format!("expected {kind}:lo:hi:n, got `{spec}`"));
    }
    let lo = parse_f64(parts[1])?;
    let hi = parse_f64(parts[2])?;
    let n: usize = parts[3]
        .parse()
        .map_err(|_| format!("bad point count in `{spec}`"))?;
    if n == 0 {
        return Err(format!("empty range `{spec}`"));
    }
    let step = |i: usize| {
        if n == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        }
    };
    Ok(Some(if kind == "lin" {
        (0..n).map(|i| lo + (hi - lo) * step(i)).collect()
    } else {
        if !(lo > 0.0 && hi > 0.0) {
            return Err(format!("log range needs positive ends: `{spec}`"));
        }
        infscale_core::stats::log_space(lo, hi, n)
    }))
}

pub fn parse_floats(spec: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match range(part)? {
            Some(v) => out.extend(v),
            None => out.push(parse_f64(part)?),
        }
    }
    if out.is_empty() {
        return Err("empty grid".into());
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err("grid values must be finite".into());
    }
    Ok(out)
}

/// Positive integers; ranges are rounded and deduplicated, and `1e4` is accepted.
pub fn parse_counts(spec: &str) -> Result<Vec<usize>, String> {
    let mut out: Vec<usize> = Vec::new();
    for v in parse_floats(spec)? {
        if !(v >= 0.5) {
            return Err(format!("counts must be >= 1, got {v}"));
        }
        let k = v.round() as usize;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}
