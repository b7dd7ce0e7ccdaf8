//! Independent Punycode decoder used only as a test oracle for the encoder.
//! Written directly from the RFC 3492 decoding procedure.

#[allow(dead_code)]
pub fn decode(input: &str) -> Option<Vec<char>> {
    const BASE: u64 = 36;
    const TMIN: u64 = 1;
    const TMAX: u64 = 26;

    fn bias_after(delta: u64, points: u64, first: bool) -> u64 {
        let mut d = if first { delta / 700 } else { delta / 2 };
        d += d / points;
        let mut k = 0;
        while d > 455 {
            d /= 35;
            k += 36;
        }
        k + 36 * d / (d + 38)
    }

    fn digit_value(c: u8) -> Option<u64> {
        match c {
            b'a'..=b'z' => Some(u64::from(c - b'a')),
            b'A'..=b'Z' => Some(u64::from(c - b'A')),
            b'0'..=b'9' => Some(u64::from(c - b'0') + 26),
            _ => None,
        }
    }

    let (basic, rest) = match input.rfind('-') {
        Some(pos) => (&input[..pos], &input[pos + 1..]),
        None => ("", input),
    };
    let mut out: Vec<char> = basic.chars().collect();
    if out.iter().any(|c| !c.is_ascii()) {
        return None;
    }

    let mut n: u64 = 128;
    let mut i: u64 = 0;
    let mut bias: u64 = 72;
    let bytes = rest.as_bytes();
    let mut pos = 0;
    while pos < bytes.len() {
        let old_i = i;
        let mut w: u64 = 1;
        let mut k = BASE;
        loop {
            let digit = digit_value(*bytes.get(pos)?)?;
            pos += 1;
            i = i.checked_add(digit.checked_mul(w)?)?;
            let t = if k <= bias {
                TMIN
            } else if k >= bias + TMAX {
                TMAX
            } else {
                k - bias
            };
            if digit < t {
                break;
            }
            w = w.checked_mul(BASE - t)?;
            k += BASE;
        }
        let len = out.len() as u64 + 1;
        bias = bias_after(i - old_i, len, old_i == 0);
        n = n.checked_add(i / len)?;
        i %= len;
        out.insert(i as usize, char::from_u32(u32::try_from(n).ok()?)?);
        i += 1;
    }
    Some(out)
}
