//! Bootstring encoder with the Punycode parameters (RFC 3492).
//!
//! Only the encoding direction is part of the library; hostname comparison
//! never needs to go back to Unicode.

use thiserror::Error;

const BASE: u32 = 36;
const T_MIN: u32 = 1;
const T_MAX: u32 = 26;
const SKEW: u32 = 38;
const DAMP: u32 = 700;
const INITIAL_BIAS: u32 = 72;
const INITIAL_N: u32 = 0x80;
const DELIMITER: char = '-';

pub const ACE_PREFIX: &str = "xn--";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PunycodeError {
    #[error("label is empty")]
    EmptyLabel,
    #[error("delta overflowed while encoding")]
    EncodingOverflow,
}

fn adapt(mut delta: u32, num_points: u32, first_time: bool) -> u32 {
    delta /= if first_time { DAMP } else { 2 };
    delta += delta / num_points;
    let mut k = 0;
    while delta > ((BASE - T_MIN) * T_MAX) / 2 {
        delta /= BASE - T_MIN;
        k += BASE;
    }
    k + (BASE - T_MIN + 1) * delta / (delta + SKEW)
}

fn encode_digit(d: u32) -> char {
    debug_assert!(d < BASE);
    let byte = if d < 26 { b'a' + d as u8 } else { b'0' + (d - 26) as u8 };
    byte as char
}

fn threshold(k: u32, bias: u32) -> u32 {
    if k <= bias {
        T_MIN
    } else if k >= bias + T_MAX {
        T_MAX
    } else {
        k - bias
    }
}

/// Raw Punycode encoding of a sequence of code points, without the ACE prefix.
pub fn encode(input: &[char]) -> Result<String, PunycodeError> {
    let mut output: String = input.iter().filter(|c| c.is_ascii()).collect();
    let basic_len = output.len() as u32;
    if basic_len > 0 {
        output.push(DELIMITER);
    }

    let total = input.len() as u32;
    let mut n = INITIAL_N;
    let mut delta: u32 = 0;
    let mut bias = INITIAL_BIAS;
    let mut handled = basic_len;

    while handled < total {
        // smallest code point not yet handled
        let m = input
            .iter()
            .map(|&c| c as u32)
            .filter(|&c| c >= n)
            .min()
            .expect("unhandled code point exists");
        delta = (m - n)
            .checked_mul(handled + 1)
            .and_then(|d| d.checked_add(delta))
            .ok_or(PunycodeError::EncodingOverflow)?;
        n = m;

        for &c in input {
            let c = c as u32;
            if c < n {
                delta = delta.checked_add(1).ok_or(PunycodeError::EncodingOverflow)?;
            }
            if c == n {
                let mut q = delta;
                let mut k = BASE;
                loop {
                    let t = threshold(k, bias);
                    if q < t {
                        break;
                    }
                    output.push(encode_digit(t + (q - t) % (BASE - t)));
                    q = (q - t) / (BASE - t);
                    k += BASE;
                }
                output.push(encode_digit(q));
                bias = adapt(delta, handled + 1, handled == basic_len);
                delta = 0;
                handled += 1;
            }
        }
        delta = delta.checked_add(1).ok_or(PunycodeError::EncodingOverflow)?;
        n = n.checked_add(1).ok_or(PunycodeError::EncodingOverflow)?;
    }
    Ok(output)
}

/// Converts one hostname label to its ASCII form.
///
/// ASCII labels come back lowercased and otherwise unchanged; anything with
/// a non-ASCII code point is lowercased, Punycode-encoded and given the
/// `xn--` prefix.
pub fn to_punycode(label: &str) -> Result<String, PunycodeError> {
    if label.is_empty() {
        return Err(PunycodeError::EmptyLabel);
    }
    if label.is_ascii() {
        return Ok(label.to_ascii_lowercase());
    }
    let chars: Vec<char> = label.to_lowercase().chars().collect();
    Ok(format!("{ACE_PREFIX}{}", encode(&chars)?))
}

#[cfg(test)]
#[path = "../tests/support/punycode_decode.rs"]
mod decode_oracle;
