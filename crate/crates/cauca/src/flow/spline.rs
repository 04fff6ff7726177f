//! Monotone rational-quadratic splines with linear tails.
//!
//! One spline maps a scalar through K monotone rational-quadratic segments
//! on [-B, B] and the identity outside. A raw parameter vector of length
//! 3K - 1 is decoded as:
//! - K bin-width logits, softmax then mixed with a minimum fraction,
//! - K bin-height logits, same treatment,
//! - K - 1 interior knot derivatives through a shifted softplus; boundary
//!   derivatives are pinned to 1 so the spline meets the identity tails
//!   with a continuous first derivative.
//!
//! The shift is ln(e - 1): at all-zero raw parameters every decoded
//! derivative is exactly 1 and the knots are uniform, so the spline is the
//! identity map. This gives flow layers an exact identity initialization.
//!
//! The reverse pass is hand-derived. Given upstream gradients with respect
//! to the output y and the log-derivative lambda, it accumulates gradients
//! into the raw parameter vector and returns the gradient with respect to
//! the scalar input.

use crate::nn::{sigmoid, softplus};
use serde::{Deserialize, Serialize};

/// Smallest fraction of the interval a single bin may occupy.
pub const MIN_BIN_FRACTION: f64 = 1e-3;

/// ln(e - 1); softplus(0 + shift) = 1.
#[inline]
pub fn deriv_shift() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Spline family: K bins on [-tail_bound, tail_bound].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rqs {
    pub k_bins: usize,
    pub tail_bound: f64,
}

impl Rqs {
    pub fn new(k_bins: usize, tail_bound: f64) -> Self {
        assert!(k_bins >= 2, "need at least two bins, got {k_bins}");
        assert!(tail_bound > 0.0, "tail bound must be positive");
        Rqs { k_bins, tail_bound }
    }

    /// Raw parameters per transformed scalar: widths + heights + derivatives.
    pub fn n_raw(&self) -> usize {
        3 * self.k_bins - 1
    }

    /// Decode raw parameters into knot arrays inside `s`.
    pub fn build(&self, raw: &[f64], s: &mut RqsScratch) {
        let k = self.k_bins;
        debug_assert_eq!(raw.len(), self.n_raw(), "raw parameter length");
        debug_assert_eq!(s.k, k, "scratch sized for a different bin count");
        let b = self.tail_bound;
        softmax_into(&raw[0..k], &mut s.pw);
        softmax_into(&raw[k..2 * k], &mut s.ph);
        let scale = 1.0 - MIN_BIN_FRACTION * k as f64;
        let mut acc = -b;
        s.xk[0] = acc;
        for i in 0..k {
            acc += 2.0 * b * (MIN_BIN_FRACTION + scale * s.pw[i]);
            s.xk[i + 1] = acc;
        }
        acc = -b;
        s.yk[0] = acc;
        for i in 0..k {
            acc += 2.0 * b * (MIN_BIN_FRACTION + scale * s.ph[i]);
            s.yk[i + 1] = acc;
        }
        let shift = deriv_shift();
        s.dk[0] = 1.0;
        s.dk[k] = 1.0;
        for j in 1..k {
            s.dk[j] = softplus(raw[2 * k + j - 1] + shift);
        }
    }

    /// Map x through the decoded spline. Returns (y, log dy/dx).
    pub fn forward_knots(&self, s: &RqsScratch, x: f64) -> (f64, f64) {
        let k = self.k_bins;
        if x <= s.xk[0] || x >= s.xk[k] {
            return (x, 0.0);
        }
        let bin = find_bin(&s.xk, x);
        let t = BinTerms::at(s, bin, x);
        let y = s.yk[bin] + t.num / t.den;
        let lam = 2.0 * t.sl.ln() + t.numd.ln() - 2.0 * t.den.ln();
        (y, lam)
    }

    /// Invert the decoded spline. Returns (x, log dy/dx evaluated at x).
    pub fn inverse_knots(&self, s: &RqsScratch, y: f64) -> (f64, f64) {
        let k = self.k_bins;
        if y <= s.yk[0] || y >= s.yk[k] {
            return (y, 0.0);
        }
        let mut bin = k - 1;
        for i in 0..k {
            if y < s.yk[i + 1] {
                bin = i;
                break;
            }
        }
        let x0 = s.xk[bin];
        let w = s.xk[bin + 1] - x0;
        let h = s.yk[bin + 1] - s.yk[bin];
        let sl = h / w;
        let d0 = s.dk[bin];
        let d1 = s.dk[bin + 1];
        let dy = y - s.yk[bin];
        let tsum = d1 + d0 - 2.0 * sl;
        // quadratic in the bin coordinate xi, solved in the stable form
        let qa = h * (sl - d0) + dy * tsum;
        let qb = h * d0 - dy * tsum;
        let qc = -sl * dy;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let xi = 2.0 * qc / (-qb - disc.sqrt());
        let xi = xi.clamp(0.0, 1.0);
        let x = x0 + xi * w;
        let t = BinTerms::at(s, bin, x);
        let lam = 2.0 * t.sl.ln() + t.numd.ln() - 2.0 * t.den.ln();
        (x, lam)
    }

    pub fn forward(&self, raw: &[f64], x: f64, s: &mut RqsScratch) -> (f64, f64) {
        self.build(raw, s);
        self.forward_knots(s, x)
    }

    pub fn inverse(&self, raw: &[f64], y: f64, s: &mut RqsScratch) -> (f64, f64) {
        self.build(raw, s);
        self.inverse_knots(s, y)
    }

    /// Reverse pass for one scalar. `s` must already hold the knots decoded
    /// from `raw`. Accumulates into `graw` and returns dL/dx.
    pub fn backward_knots(
        &self,
        raw: &[f64],
        s: &mut RqsScratch,
        x: f64,
        gy: f64,
        glam: f64,
        graw: &mut [f64],
    ) -> f64 {
        let k = self.k_bins;
        debug_assert_eq!(graw.len(), self.n_raw());
        if x <= s.xk[0] || x >= s.xk[k] {
            // identity tail: no parameter dependence
            return gy;
        }
        s.gxk.iter_mut().for_each(|v| *v = 0.0);
        s.gyk.iter_mut().for_each(|v| *v = 0.0);
        s.gdk.iter_mut().for_each(|v| *v = 0.0);

        let bin = find_bin(&s.xk, x);
        let t = BinTerms::at(s, bin, x);
        let BinTerms { w, h, sl, xi, omx, th, num, den, numd } = t;
        let d0 = s.dk[bin];
        let d1 = s.dk[bin + 1];

        // y = yk + num / den
        s.gyk[bin] += gy;
        let g_num = gy / den;
        let mut g_den = -gy * num / (den * den);
        // lambda = 2 ln sl + ln numd - 2 ln den
        let mut g_sl = 2.0 * glam / sl;
        let g_numd = glam / numd;
        g_den += -2.0 * glam / den;
        // numd = d1 xi^2 + 2 sl th + d0 (1-xi)^2
        let mut g_d1 = g_numd * xi * xi;
        g_sl += g_numd * 2.0 * th;
        let mut g_th = g_numd * 2.0 * sl;
        let mut g_d0 = g_numd * omx * omx;
        let mut g_xi = g_numd * (2.0 * d1 * xi - 2.0 * d0 * omx);
        // den = sl + (d1 + d0 - 2 sl) th
        g_sl += g_den * (1.0 - 2.0 * th);
        g_d1 += g_den * th;
        g_d0 += g_den * th;
        g_th += g_den * (d1 + d0 - 2.0 * sl);
        // num = h (sl xi^2 + d0 th)
        let mut g_h = g_num * (sl * xi * xi + d0 * th);
        g_sl += g_num * h * xi * xi;
        g_d0 += g_num * h * th;
        g_xi += g_num * h * 2.0 * sl * xi;
        g_th += g_num * h * d0;
        // th = xi (1 - xi)
        g_xi += g_th * (1.0 - 2.0 * xi);
        // sl = h / w
        g_h += g_sl / w;
        let g_w_from_sl = -g_sl * sl / w;
        // xi = (x - xk0) / w
        let gx = g_xi / w;
        s.gxk[bin] += -g_xi / w;
        let g_w = g_w_from_sl - g_xi * xi / w;
        // w = xk1 - xk0, h = yk1 - yk0
        s.gxk[bin + 1] += g_w;
        s.gxk[bin] -= g_w;
        s.gyk[bin + 1] += g_h;
        s.gyk[bin] -= g_h;
        s.gdk[bin] += g_d0;
        s.gdk[bin + 1] += g_d1;

        // knots to raw parameters
        let b = self.tail_bound;
        let scale = 1.0 - MIN_BIN_FRACTION * k as f64;
        let mut acc = 0.0;
        for i in (0..k).rev() {
            acc += s.gxk[i + 1];
            s.gp[i] = acc * 2.0 * b * scale;
        }
        softmax_backward(&s.pw, &s.gp, &mut graw[0..k]);
        acc = 0.0;
        for i in (0..k).rev() {
            acc += s.gyk[i + 1];
            s.gp[i] = acc * 2.0 * b * scale;
        }
        softmax_backward(&s.ph, &s.gp, &mut graw[k..2 * k]);
        let shift = deriv_shift();
        for j in 1..k {
            graw[2 * k + j - 1] += s.gdk[j] * sigmoid(raw[2 * k + j - 1] + shift);
        }
        gx
    }

    pub fn backward(
        &self,
        raw: &[f64],
        x: f64,
        gy: f64,
        glam: f64,
        graw: &mut [f64],
        s: &mut RqsScratch,
    ) -> f64 {
        self.build(raw, s);
        self.backward_knots(raw, s, x, gy, glam, graw)
    }
}

/// Reusable buffers for one spline evaluation.
#[derive(Debug, Clone)]
pub struct RqsScratch {
    k: usize,
    xk: Vec<f64>,
    yk: Vec<f64>,
    dk: Vec<f64>,
    pw: Vec<f64>,
    ph: Vec<f64>,
    gxk: Vec<f64>,
    gyk: Vec<f64>,
    gdk: Vec<f64>,
    gp: Vec<f64>,
}

impl RqsScratch {
    pub fn new(k_bins: usize) -> Self {
        RqsScratch {
            k: k_bins,
            xk: vec![0.0; k_bins + 1],
            yk: vec![0.0; k_bins + 1],
            dk: vec![0.0; k_bins + 1],
            pw: vec![0.0; k_bins],
            ph: vec![0.0; k_bins],
            gxk: vec![0.0; k_bins + 1],
            gyk: vec![0.0; k_bins + 1],
            gdk: vec![0.0; k_bins + 1],
            gp: vec![0.0; k_bins],
        }
    }
}

/// Shared per-bin intermediates of the forward map.
struct BinTerms {
    w: f64,
    h: f64,
    sl: f64,
    xi: f64,
    omx: f64,
    th: f64,
    num: f64,
    den: f64,
    numd: f64,
}

impl BinTerms {
    #[inline]
    fn at(s: &RqsScratch, bin: usize, x: f64) -> BinTerms {
        let x0 = s.xk[bin];
        let w = s.xk[bin + 1] - x0;
        let h = s.yk[bin + 1] - s.yk[bin];
        let sl = h / w;
        let d0 = s.dk[bin];
        let d1 = s.dk[bin + 1];
        let xi = (x - x0) / w;
        let omx = 1.0 - xi;
        let th = xi * omx;
        let num = h * (sl * xi * xi + d0 * th);
        let den = sl + (d1 + d0 - 2.0 * sl) * th;
        let numd = d1 * xi * xi + 2.0 * sl * th + d0 * omx * omx;
        BinTerms { w, h, sl, xi, omx, th, num, den, numd }
    }
}

#[inline]
fn find_bin(xk: &[f64], x: f64) -> usize {
    let k = xk.len() - 1;
    let mut bin = k - 1;
    for i in 0..k {
        if x < xk[i + 1] {
            bin = i;
            break;
        }
    }
    bin
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// d logits from d probabilities: g_i = p_i (gp_i - <p, gp>).
fn softmax_backward(p: &[f64], gp: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(gp) {
        *o += pi * (gi - dot);
    }
}
