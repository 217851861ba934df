//! Procedural head phantom used as the synthesis function `G(w)`.
//!
//! Each of the first four style blocks drives one attribute family:
//!
//! | block | attribute | slots |
//! |-------|-----------|-------|
//! | 0 | outer geometry | center x/y, semi-axes, rotation, inner scale, egg asymmetry, inner offset |
//! | 1 | contrast | background, rim, interior, two inclusion intensities, interior shading x/y, texture gain |
//! | 2 | internal structure | two inclusions: center x/y and semi-axes, in units of the inner ellipse |
//! | 3 | texture | two plane waves: amplitude, orientation, frequency, phase |
//!
//! A raw style value `w` becomes a physical parameter `mid + half * tanh(w)`.
//! Regions are soft ellipse indicators `sigmoid((1 - q) / tau)` composited
//! back to front, and the result passes through `sigmoid(4 (v - 1/2))`, so the
//! image lies in (0, 1) and is smooth in every coordinate of `w`.
//!
//! Region boundaries depend on blocks 0 and 2 only, so editing the contrast
//! block changes intensities without moving any edge.

use std::f64::consts::{FRAC_PI_2, PI};

pub const BLOCKS: usize = 4;
pub const SLOTS: usize = 8;
pub const PARAM_COUNT: usize = BLOCKS * SLOTS;

pub const GEOMETRY_BLOCK: usize = 0;
pub const CONTRAST_BLOCK: usize = 1;
pub const STRUCTURE_BLOCK: usize = 2;
pub const TEXTURE_BLOCK: usize = 3;

// geometry
const CX: usize = 0;
const CY: usize = 1;
const AX: usize = 2;
const BX: usize = 3;
const THETA: usize = 4;
const INNER: usize = 5;
const EGG: usize = 6;
const OFFSET: usize = 7;
// contrast
const BG: usize = 8;
const RIM: usize = 9;
const INTERIOR: usize = 10;
const INC: [usize; 2] = [11, 12];
const SHADE_X: usize = 13;
const SHADE_Y: usize = 14;
const GAIN: usize = 15;
// structure: per inclusion (px, py, ra, rb)
const INCL: [usize; 2] = [16, 20];
// texture: per wave (amplitude, orientation, frequency, phase)
const WAVE: [usize; 2] = [24, 28];

/// Physical parameter = `mid + half * tanh(raw)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotRange {
    pub mid: f64,
    pub half: f64,
}

const fn r(mid: f64, half: f64) -> SlotRange {
    SlotRange { mid, half }
}

pub fn default_ranges() -> Vec<SlotRange> {
    vec![
        // geometry
        r(0.0, 0.06),
        r(0.0, 0.06),
        r(0.70, 0.08),
        r(0.80, 0.08),
        r(0.0, 0.25),
        r(0.86, 0.04),
        r(0.0, 0.15),
        r(0.0, 0.04),
        // contrast (pre-logistic intensity units)
        r(-0.6, 0.1),
        r(0.95, 0.25),
        r(0.45, 0.2),
        r(0.5, 0.45),
        r(0.5, 0.45),
        r(0.0, 0.15),
        r(0.0, 0.15),
        r(1.0, 0.5),
        // structure
        r(-0.32, 0.1),
        r(0.05, 0.12),
        r(0.2, 0.06),
        r(0.34, 0.1),
        r(0.32, 0.1),
        r(0.05, 0.12),
        r(0.2, 0.06),
        r(0.34, 0.1),
        // texture; amplitudes are symmetric about zero
        r(0.0, 0.12),
        r(0.0, 0.8),
        r(2.0, 1.0),
        r(0.0, PI),
        r(0.0, 0.08),
        r(FRAC_PI_2, 0.8),
        r(3.0, 1.0),
        r(0.0, PI),
    ]
}

/// Map slot `s` to its coordinate in a latent with style dim `k` and `layers`
/// blocks. Slots beyond the latent's shape stay at their range midpoint.
pub fn latent_index(slot: usize, k: usize, layers: usize) -> Option<usize> {
    let (b, s) = (slot / SLOTS, slot % SLOTS);
    (b < layers && s < k).then_some(b * k + s)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Decoded physical parameters and per-slot `d param / d raw`.
pub struct Decoded {
    pub p: [f64; PARAM_COUNT],
    pub dp: [f64; PARAM_COUNT],
    pub index: [Option<usize>; PARAM_COUNT],
}

pub fn decode(ranges: &[SlotRange], w: &[f64], k: usize, layers: usize) -> Decoded {
    let mut p = [0.0; PARAM_COUNT];
    let mut dp = [0.0; PARAM_COUNT];
    let mut index = [None; PARAM_COUNT];
    for s in 0..PARAM_COUNT {
        let SlotRange { mid, half } = ranges[s];
        match latent_index(s, k, layers) {
            Some(i) => {
                let t = w[i].tanh();
                p[s] = mid + half * t;
                dp[s] = half * (1.0 - t * t);
                index[s] = Some(i);
            }
            None => p[s] = mid,
        }
    }
    Decoded { p, dp, index }
}

/// Per-image constants derived from the physical parameters.
struct Frame {
    ct: f64,
    st: f64,
    inner_a: f64,
    inner_b: f64,
    wave_dir: [(f64, f64); 2],
}

impl Frame {
    fn new(p: &[f64; PARAM_COUNT]) -> Self {
        let wave_dir = [0, 1].map(|c| {
            let phi = p[WAVE[c] + 1];
            (phi.cos(), phi.sin())
        });
        Self {
            ct: p[THETA].cos(),
            st: p[THETA].sin(),
            inner_a: p[INNER] * p[AX],
            inner_b: p[INNER] * p[BX],
            wave_dir,
        }
    }
}

#[inline]
fn pixel_coords(i: usize, j: usize, h: usize, w: usize) -> (f64, f64) {
    ((j as f64 + 0.5) / w as f64 * 2.0 - 1.0, (i as f64 + 0.5) / h as f64 * 2.0 - 1.0)
}

/// Intermediates of one pixel, kept for the backward pass.
struct Pixel {
    u: f64,
    v: f64,
    m_head: f64,
    vi: f64,
    m_inner: f64,
    incl: [(f64, f64, f64); 2], // (du, dv, mask)
    wave_arg: [f64; 2],
    wave_sum: f64,
    interior: f64,
    v1: f64,
    v2: f64,
    v3: f64,
    out: f64,
}

fn inclusion_geometry(p: &[f64; PARAM_COUNT], fr: &Frame, c: usize) -> (f64, f64, f64, f64) {
    let b = INCL[c];
    let uc = p[b] * fr.inner_a;
    let vc = p[OFFSET] + p[b + 1] * fr.inner_b;
    let ra = p[b + 2] * fr.inner_a;
    let rb = p[b + 3] * fr.inner_b;
    (uc, vc, ra, rb)
}

fn eval_pixel(p: &[f64; PARAM_COUNT], fr: &Frame, tau: f64, x: f64, y: f64) -> Pixel {
    let dx = x - p[CX];
    let dy = y - p[CY];
    let u = fr.ct * dx + fr.st * dy;
    let v = -fr.st * dx + fr.ct * dy;
    let e = p[EGG];

    let ua = u / p[AX];
    let vb = v / p[BX];
    let q_head = ua * ua * (1.0 + e * v) + vb * vb;
    let m_head = sigmoid((1.0 - q_head) / tau);

    let vi = v - p[OFFSET];
    let uia = u / fr.inner_a;
    let vib = vi / fr.inner_b;
    let q_inner = uia * uia * (1.0 + e * vi) + vib * vib;
    let m_inner = sigmoid((1.0 - q_inner) / tau);

    let mut incl = [(0.0, 0.0, 0.0); 2];
    for (c, slot) in incl.iter_mut().enumerate() {
        let (uc, vc, ra, rb) = inclusion_geometry(p, fr, c);
        let du = u - uc;
        let dv = v - vc;
        let q = (du / ra).powi(2) + (dv / rb).powi(2);
        *slot = (du, dv, sigmoid((1.0 - q) / tau));
    }

    let mut wave_arg = [0.0; 2];
    let mut wave_sum = 0.0;
    for c in 0..2 {
        let b = WAVE[c];
        let (cphi, sphi) = fr.wave_dir[c];
        let arg = 2.0 * PI * p[b + 2] * (x * cphi + y * sphi) + p[b + 3];
        wave_arg[c] = arg;
        wave_sum += p[b] * arg.sin();
    }
    let interior = p[INTERIOR] + p[SHADE_X] * u + p[SHADE_Y] * v + p[GAIN] * wave_sum;

    let bg = p[BG];
    let v1 = bg + m_head * (p[RIM] - bg);
    let v2 = v1 + m_inner * (interior - v1);
    let v3 = v2 + incl[0].2 * (p[INC[0]] - v2);
    let v4 = v3 + incl[1].2 * (p[INC[1]] - v3);
    let out = sigmoid(4.0 * (v4 - 0.5));
    Pixel {
        u,
        v,
        m_head,
        vi,
        m_inner,
        incl,
        wave_arg,
        wave_sum,
        interior,
        v1,
        v2,
        v3,
        out,
    }
}

pub fn render(p: &[f64; PARAM_COUNT], tau: f64, h: usize, w: usize) -> Vec<f64> {
    let fr = Frame::new(p);
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = pixel_coords(i, j, h, w);
            out.push(eval_pixel(p, &fr, tau, x, y).out);
        }
    }
    out
}

/// Soft region indicators (head, inner, inclusion 1, inclusion 2) per pixel.
pub fn region_masks(p: &[f64; PARAM_COUNT], tau: f64, h: usize, w: usize) -> [Vec<f64>; 4] {
    let fr = Frame::new(p);
    let mut m: [Vec<f64>; 4] = Default::default();
    for i in 0..h {
        for j in 0..w {
            let (x, y) = pixel_coords(i, j, h, w);
            let px = eval_pixel(p, &fr, tau, x, y);
            m[0].push(px.m_head);
            m[1].push(px.m_inner);
            m[2].push(px.incl[0].2);
            m[3].push(px.incl[1].2);
        }
    }
    m
}

/// Gradient of `sum(cot * render(p))` with respect to the physical parameters.
pub fn render_vjp(p: &[f64; PARAM_COUNT], tau: f64, h: usize, w: usize, cot: &[f64]) -> [f64; PARAM_COUNT] {
    let fr = Frame::new(p);
    let mut g = [0.0; PARAM_COUNT];
    let e = p[EGG];
    let (a, b) = (p[AX], p[BX]);
    let (ia, ib) = (fr.inner_a, fr.inner_b);
    let incl_geo = [inclusion_geometry(p, &fr, 0), inclusion_geometry(p, &fr, 1)];

    for i in 0..h {
        for j in 0..w {
            let c = cot[i * w + j];
            if c == 0.0 {
                continue;
            }
            let (x, y) = pixel_coords(i, j, h, w);
            let px = eval_pixel(p, &fr, tau, x, y);

            let g_v4 = c * 4.0 * px.out * (1.0 - px.out);
            // v4 = v3 + m2 (inc2 - v3)
            let m2 = px.incl[1].2;
            g[INC[1]] += g_v4 * m2;
            let g_m2 = g_v4 * (p[INC[1]] - px.v3);
            let g_v3 = g_v4 * (1.0 - m2);
            // v3 = v2 + m1 (inc1 - v2)
            let m1 = px.incl[0].2;
            g[INC[0]] += g_v3 * m1;
            let g_m1 = g_v3 * (p[INC[0]] - px.v2);
            let g_v2 = g_v3 * (1.0 - m1);
            // v2 = v1 + mi (interior - v1)
            let g_int = g_v2 * px.m_inner;
            let g_mi = g_v2 * (px.interior - px.v1);
            let g_v1 = g_v2 * (1.0 - px.m_inner);
            // v1 = bg + mh (rim - bg)
            g[RIM] += g_v1 * px.m_head;
            g[BG] += g_v1 * (1.0 - px.m_head);
            let g_mh = g_v1 * (p[RIM] - p[BG]);

            // interior = I + sx u + sy v + gain * waves
            g[INTERIOR] += g_int;
            g[SHADE_X] += g_int * px.u;
            g[SHADE_Y] += g_int * px.v;
            let mut g_u = g_int * p[SHADE_X];
            let mut g_v = g_int * p[SHADE_Y];
            g[GAIN] += g_int * px.wave_sum;
            let g_waves = g_int * p[GAIN];
            for cw in 0..2 {
                let bw = WAVE[cw];
                let (cphi, sphi) = fr.wave_dir[cw];
                let arg = px.wave_arg[cw];
                g[bw] += g_waves * arg.sin();
                let g_arg = g_waves * p[bw] * arg.cos();
                g[bw + 3] += g_arg;
                g[bw + 2] += g_arg * 2.0 * PI * (x * cphi + y * sphi);
                g[bw + 1] += g_arg * 2.0 * PI * p[bw + 2] * (-x * sphi + y * cphi);
            }

            let mut g_ia = 0.0;
            let mut g_ib = 0.0;

            // inclusions: q = (du / ra)^2 + (dv / rb)^2
            for (cm, g_m) in [g_m1, g_m2].into_iter().enumerate() {
                let (du, dv, m) = px.incl[cm];
                let g_q = -g_m * m * (1.0 - m) / tau;
                if g_q == 0.0 {
                    continue;
                }
                let (_, _, ra, rb) = incl_geo[cm];
                let bi = INCL[cm];
                let dq_du = 2.0 * du / (ra * ra);
                let dq_dv = 2.0 * dv / (rb * rb);
                g_u += g_q * dq_du;
                g_v += g_q * dq_dv;
                let g_uc = -g_q * dq_du;
                let g_vc = -g_q * dq_dv;
                let g_ra = -g_q * 2.0 * du * du / (ra * ra * ra);
                let g_rb = -g_q * 2.0 * dv * dv / (rb * rb * rb);
                // uc = px ia, vc = o + py ib, ra = rx ia, rb = ry ib
                g[bi] += g_uc * ia;
                g_ia += g_uc * p[bi];
                g[OFFSET] += g_vc;
                g[bi + 1] += g_vc * ib;
                g_ib += g_vc * p[bi + 1];
                g[bi + 2] += g_ra * ia;
                g_ia += g_ra * p[bi + 2];
                g[bi + 3] += g_rb * ib;
                g_ib += g_rb * p[bi + 3];
            }

            // inner: q = (u / ia)^2 (1 + e vi) + (vi / ib)^2, vi = v - o
            let g_qi = -g_mi * px.m_inner * (1.0 - px.m_inner) / tau;
            if g_qi != 0.0 {
                let ua = px.u / ia;
                let vi = px.vi;
                let shape = 1.0 + e * vi;
                g_u += g_qi * 2.0 * ua / ia * shape;
                let g_vi = g_qi * (ua * ua * e + 2.0 * vi / (ib * ib));
                g_v += g_vi;
                g[OFFSET] -= g_vi;
                g_ia += g_qi * (-2.0 * ua * ua / ia * shape);
                g_ib += g_qi * (-2.0 * vi * vi / (ib * ib * ib));
                g[EGG] += g_qi * ua * ua * vi;
            }

            // head: q = (u / a)^2 (1 + e v) + (v / b)^2
            let g_qh = -g_mh * px.m_head * (1.0 - px.m_head) / tau;
            if g_qh != 0.0 {
                let ua = px.u / a;
                let shape = 1.0 + e * px.v;
                g_u += g_qh * 2.0 * ua / a * shape;
                g_v += g_qh * (ua * ua * e + 2.0 * px.v / (b * b));
                g[AX] += g_qh * (-2.0 * ua * ua / a * shape);
                g[BX] += g_qh * (-2.0 * px.v * px.v / (b * b * b));
                g[EGG] += g_qh * ua * ua * px.v;
            }

            // ia = s a, ib = s b
            g[INNER] += g_ia * a + g_ib * b;
            g[AX] += g_ia * p[INNER];
            g[BX] += g_ib * p[INNER];

            // u = ct dx + st dy, v = -st dx + ct dy
            g[CX] += -fr.ct * g_u + fr.st * g_v;
            g[CY] += -fr.st * g_u - fr.ct * g_v;
            g[THETA] += g_u * px.v - g_v * px.u;
        }
    }
    g
}
