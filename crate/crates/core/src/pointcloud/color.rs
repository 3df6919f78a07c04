//! Full-range BT.709 conversion between RGB and YUV on the 8-bit scale.

const KR: f64 = 0.2126;
const KG: f64 = 0.7152;
const KB: f64 = 0.0722;
/// `2 * (1 - KB)`
const CB_SCALE: f64 = 1.8556;
/// `2 * (1 - KR)`
const CR_SCALE: f64 = 1.5748;
const CHROMA_OFFSET: f64 = 127.5;

/// Converts an RGB triple (each channel in `[0, 255]`) to YUV.
///
/// Inputs outside `[0, 255]` are clamped first. Chroma is centered at 127.5 so
/// that every output channel covers `[0, 255]`.
///
/// ```
/// let [y, u, v] = pcrd::rgb_to_yuv(255.0, 255.0, 255.0);
/// assert!((y - 255.0).abs() < 1e-9);
/// assert!((u - 127.5).abs() < 1e-9 && (v - 127.5).abs() < 1e-9);
/// ```
pub fn rgb_to_yuv(r: f64, g: f64, b: f64) -> [f64; 3] {
    let r = clamp_channel(r);
    let g = clamp_channel(g);
    let b = clamp_channel(b);
    let y = KR * r + KG * g + KB * b;
    let u = (b - y) / CB_SCALE + CHROMA_OFFSET;
    let v = (r - y) / CR_SCALE + CHROMA_OFFSET;
    [clamp_channel(y), clamp_channel(u), clamp_channel(v)]
}

/// Inverse of [`rgb_to_yuv`] before any clamping or rounding.
pub fn yuv_to_rgb(y: f64, u: f64, v: f64) -> [f64; 3] {
    let r = y + CR_SCALE * (v - CHROMA_OFFSET);
    let b = y + CB_SCALE * (u - CHROMA_OFFSET);
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

/// Rounds a real channel value to the nearest 8-bit code.
pub fn quantize_channel(value: f64) -> u8 {
    clamp_channel(value).round() as u8
}

fn clamp_channel(value: f64) -> f64 {
    value.clamp(0.0, 255.0)
}
