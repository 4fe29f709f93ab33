//! G.711 µ-law companding (64 kb/s at 8 kHz).

const BIAS: i32 = 0x84;
const CLIP: i32 = 32635;

/// Compresses one 16-bit linear sample to an 8-bit µ-law code.
pub fn encode_sample(sample: i16) -> u8 {
    let mut x = i32::from(sample);
    let sign = if x < 0 {
        x = -x;
        0x80
    } else {
        0
    };
    let x = x.min(CLIP) + BIAS;
    // x lies in [0x84, 0x7FFF], so its top set bit is in 7..=14
    let exponent = (31 - (x as u32).leading_zeros()) as i32 - 7;
    let mantissa = (x >> (exponent + 3)) & 0x0F;
    !((sign | (exponent << 4) | mantissa) as u8)
}

/// Expands one µ-law code to a 16-bit linear sample.
pub fn decode_sample(code: u8) -> i16 {
    let u = !code;
    let exponent = i32::from((u >> 4) & 0x07);
    let mantissa = i32::from(u & 0x0F);
    let magnitude = (((mantissa << 3) + BIAS) << exponent) - BIAS;
    if u & 0x80 != 0 {
        -magnitude as i16
    } else {
        magnitude as i16
    }
}

pub fn encode_ulaw(pcm: &[i16]) -> Vec<u8> {
    pcm.iter().copied().map(encode_sample).collect()
}

pub fn decode_ulaw(bytes: &[u8]) -> Vec<i16> {
    bytes.iter().copied().map(decode_sample).collect()
}
