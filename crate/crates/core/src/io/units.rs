//! Numbers with SPICE scale suffixes and physical quantities with explicit
//! unit strings.

/// Parses a SPICE number such as `1k`, `10n`, `2.2meg` or `1e-9`. Scale
/// suffixes are case-insensitive; trailing letters after the suffix (`10nF`,
/// `5V`) are ignored as SPICE does.
pub fn parse_spice_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut end = 0;
    let digits = |mut i: usize| {
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        i
    };
    if end < bytes.len() && (bytes[end] == b'+' || bytes[end] == b'-') {
        end += 1;
    }
    let int_end = digits(end);
    let mut mant_end = int_end;
    if mant_end < bytes.len() && bytes[mant_end] == b'.' {
        mant_end = digits(mant_end + 1);
    }
    if mant_end == end || (mant_end == end + 1 && bytes[end] == b'.') {
        return None;
    }
    end = mant_end;
    let mut exponent = 0i32;
    // Exponent only when followed by digits, so `1meg` is not `1e…`.
    if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
        let mut k = end + 1;
        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
            k += 1;
        }
        let exp_end = digits(k);
        if exp_end > k {
            exponent = s[end + 1..exp_end].parse().ok()?;
            end = exp_end;
        }
    }
    let rest = s[end..].to_ascii_lowercase();
    if !rest.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let suffix = if rest.starts_with("meg") {
        6
    } else {
        match rest.chars().next() {
            Some('f') => -15,
            Some('p') => -12,
            Some('n') => -9,
            Some('u') => -6,
            Some('m') => -3,
            Some('k') => 3,
            Some('g') => 9,
            Some('t') => 12,
            _ => 0,
        }
    };
    // Shifting the decimal exponent keeps `5u` identical to `5e-6`.
    format!("{}e{}", &s[..mant_end], exponent.checked_add(suffix)?).parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Area,
    Concentration,
    Time,
    Temperature,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, i32)] {
        match self {
            Dimension::Length => &[
                ("cm", 0),
                ("mm", -1),
                ("um", -4),
                ("µm", -4),
                ("μm", -4),
                ("nm", -7),
                ("m", 2),
            ],
            Dimension::Area => &[
                ("cm^2", 0),
                ("cm²", 0),
                ("cm2", 0),
                ("mm^2", -2),
                ("mm²", -2),
                ("um^2", -8),
                ("µm^2", -8),
                ("µm²", -8),
                ("m^2", 4),
            ],
            Dimension::Concentration => &[
                ("cm^-3", 0),
                ("cm-3", 0),
                ("cm⁻³", 0),
                ("/cm^3", 0),
                ("m^-3", -6),
            ],
            Dimension::Time => &[
                ("s", 0),
                ("ms", -3),
                ("us", -6),
                ("µs", -6),
                ("μs", -6),
                ("ns", -9),
                ("ps", -12),
            ],
            Dimension::Temperature => &[("K", 0)],
        }
    }

    /// Canonical unit, in which values are returned.
    pub fn base_unit(self) -> &'static str {
        match self {
            Dimension::Length => "cm",
            Dimension::Area => "cm^2",
            Dimension::Concentration => "cm^-3",
            Dimension::Time => "s",
            Dimension::Temperature => "K",
        }
    }
}

/// Parses `"<number> <unit>"` into the base unit of `dim` (cm, cm², cm⁻³, s
/// or K). A missing or unknown unit is an error.
pub fn parse_quantity(s: &str, dim: Dimension) -> Result<f64, String> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| format!("`{s}`: expected a number followed by a unit ({})", dim.base_unit()))?;
    let (num, unit) = (&s[..split], s[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("`{s}`: bad number `{num}`"))?;
    let exponent = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| {
            let known: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
            format!("`{s}`: unknown unit `{unit}` (expected one of {})", known.join(", "))
        })?;
    if !value.is_finite() {
        return Err(format!("`{s}`: value must be finite"));
    }
    let (mantissa, e) = match num.find(['e', 'E']) {
        Some(k) => (&num[..k], num[k + 1..].parse::<i32>().ok()),
        None => (num, Some(0)),
    };
    // Shifting the decimal exponent keeps `23 um` identical to `23e-4`.
    Ok(e.and_then(|e| format!("{mantissa}e{}", e + exponent).parse().ok())
        .unwrap_or(value * 10f64.powi(exponent)))
}
