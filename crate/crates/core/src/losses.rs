//! IoU-family bounding-box regression losses with analytic gradients.
//!
//! Boxes are parameterized as `(x_c, y_c, w, h)`. The Inner variants measure
//! overlap between auxiliary boxes that share the original centers but have
//! their sides scaled by `ratio`; `ratio < 1` sharpens the gradient for
//! boxes that already overlap well, `ratio > 1` lets boxes that barely
//! overlap (or not at all) see each other earlier.
//!
//! Gradients are taken with respect to the predicted box only. CIoU's
//! trade-off weight `alpha` is held constant during differentiation. Where
//! a predicted edge coincides with the same-side ground-truth edge the
//! derivative of `min`/`max` is split evenly between the two arguments,
//! which makes the gradient at `pred == gt` vanish.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest width or height the regression harness lets a box shrink to.
pub const MIN_SIDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterBox {
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
}

impl CenterBox {
    pub fn new(x_c: f64, y_c: f64, w: f64, h: f64) -> Result<Self> {
        if ![x_c, y_c, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("center box", "non-finite value"));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::invalid(
                "center box",
                format!("width and height must be positive, got w={w}, h={h}"),
            ));
        }
        Ok(Self { x_c, y_c, w, h })
    }

    /// The auxiliary box with sides scaled by `ratio` around the same center.
    pub fn inner(&self, ratio: Ratio) -> InnerBox {
        let half_w = self.w * ratio.0 / 2.0;
        let half_h = self.h * ratio.0 / 2.0;
        InnerBox {
            left: self.x_c - half_w,
            right: self.x_c + half_w,
            top: self.y_c - half_h,
            bottom: self.y_c + half_h,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_c: self.x_c + dx,
            y_c: self.y_c + dy,
            ..*self
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x_c: self.x_c * s,
            y_c: self.y_c * s,
            w: self.w * s,
            h: self.h * s,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_c, self.y_c, self.w, self.h]
    }
}

/// Edges of a ratio-scaled auxiliary box. `top < bottom` (image rows grow downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerBox {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

/// Auxiliary-box scale factor.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Ratio(f64);

impl Ratio {
    pub const ONE: Ratio = Ratio(1.0);
    /// Range outside of which a ratio is accepted but warned about.
    pub const TYPICAL: (f64, f64) = (0.5, 1.5);

    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::invalid("ratio", format!("must be positive, got {ratio}")));
        }
        if ratio < Self::TYPICAL.0 || ratio > Self::TYPICAL.1 {
            log::warn!(
                "ratio {ratio} is outside the usual range [{}, {}]",
                Self::TYPICAL.0,
                Self::TYPICAL.1
            );
        }
        Ok(Self(ratio))
    }

    pub fn get(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Iou,
    Giou,
    Diou,
    Ciou,
    InnerIou,
    InnerCiou,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Iou,
        LossKind::Giou,
        LossKind::Diou,
        LossKind::Ciou,
        LossKind::InnerIou,
        LossKind::InnerCiou,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            LossKind::Iou => "iou",
            LossKind::Giou => "giou",
            LossKind::Diou => "diou",
            LossKind::Ciou => "ciou",
            LossKind::InnerIou => "inner-iou",
            LossKind::InnerCiou => "inner-ciou",
        }
    }

    fn uses_plain_overlap(&self) -> bool {
        !matches!(self, LossKind::InnerIou)
    }

    fn uses_inner_overlap(&self) -> bool {
        matches!(self, LossKind::InnerIou | LossKind::InnerCiou)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::invalid("loss id", format!("unknown loss '{s}'")))
    }
}

/// Gradient with respect to `(x_c, y_c, w, h)` of the predicted box.
pub type Gradient = [f64; 4];

fn add(a: Gradient, b: Gradient) -> Gradient {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn sub(a: Gradient, b: Gradient) -> Gradient {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn scale(a: Gradient, s: f64) -> Gradient {
    a.map(|v| v * s)
}

/// Derivative weight of the first argument of `max(a, b)`.
fn max_weight(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Overlap of `[lo_p, hi_p]` and `[lo_g, hi_g]` clamped at zero, with its
/// derivatives with respect to `lo_p` and `hi_p`.
fn overlap_1d(lo_p: f64, hi_p: f64, lo_g: f64, hi_g: f64) -> (f64, f64, f64) {
    let o = hi_p.min(hi_g) - lo_p.max(lo_g);
    if o > 0.0 {
        (o, -max_weight(lo_p, lo_g), max_weight(hi_g, hi_p))
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Extent of the smallest interval covering both, with derivatives with
/// respect to `lo_p` and `hi_p`.
fn cover_1d(lo_p: f64, hi_p: f64, lo_g: f64, hi_g: f64) -> (f64, f64, f64) {
    let c = hi_p.max(hi_g) - lo_p.min(lo_g);
    (c, -max_weight(lo_g, lo_p), max_weight(hi_p, hi_g))
}

#[derive(Debug, Clone, Copy)]
struct Overlap {
    iou: f64,
    union: f64,
    d_iou: Gradient,
    d_union: Gradient,
}

/// IoU of the two boxes after scaling their sides by `s`, following the
/// auxiliary-box construction (`s = 1` is plain IoU). Union is
/// `s²·(w_gt·h_gt) + s²·(w·h) − inter`.
fn scaled_overlap(pred: &CenterBox, gt: &CenterBox, s: Ratio) -> Overlap {
    let p = pred.inner(s);
    let g = gt.inner(s);
    let s = s.0;
    let (ox, dox_l, dox_r) = overlap_1d(p.left, p.right, g.left, g.right);
    let (oy, doy_t, doy_b) = overlap_1d(p.top, p.bottom, g.top, g.bottom);
    let inter = ox * oy;
    let s2 = s * s;
    let union = gt.w * gt.h * s2 + pred.w * pred.h * s2 - inter;

    // left = x - w s / 2, right = x + w s / 2
    let d_inter = [
        oy * (dox_l + dox_r),
        ox * (doy_t + doy_b),
        oy * (dox_r - dox_l) * s / 2.0,
        ox * (doy_b - doy_t) * s / 2.0,
    ];
    let d_area = [0.0, 0.0, pred.h * s2, pred.w * s2];
    let d_union = sub(d_area, d_inter);
    let d_iou = scale(sub(scale(d_inter, union), scale(d_union, inter)), 1.0 / (union * union));
    Overlap {
        iou: inter / union,
        union,
        d_iou,
        d_union,
    }
}

#[derive(Debug, Clone, Copy)]
struct Enclosure {
    cw: f64,
    ch: f64,
    d_cw: Gradient,
    d_ch: Gradient,
}

fn enclosure(pred: &CenterBox, gt: &CenterBox) -> Enclosure {
    let p = pred.inner(Ratio::ONE);
    let g = gt.inner(Ratio::ONE);
    let (cw, dl, dr) = cover_1d(p.left, p.right, g.left, g.right);
    let (ch, dt, db) = cover_1d(p.top, p.bottom, g.top, g.bottom);
    Enclosure {
        cw,
        ch,
        d_cw: [dl + dr, 0.0, (dr - dl) / 2.0, 0.0],
        d_ch: [0.0, dt + db, 0.0, (db - dt) / 2.0],
    }
}

/// `(ρ²/c², gradient)`: squared center distance over squared enclosing diagonal.
fn distance_penalty(pred: &CenterBox, gt: &CenterBox) -> (f64, Gradient) {
    let e = enclosure(pred, gt);
    let dx = pred.x_c - gt.x_c;
    let dy = pred.y_c - gt.y_c;
    let rho2 = dx * dx + dy * dy;
    let c2 = e.cw * e.cw + e.ch * e.ch;
    let d_rho2 = [2.0 * dx, 2.0 * dy, 0.0, 0.0];
    let d_c2 = add(scale(e.d_cw, 2.0 * e.cw), scale(e.d_ch, 2.0 * e.ch));
    let grad = scale(sub(scale(d_rho2, c2), scale(d_c2, rho2)), 1.0 / (c2 * c2));
    (rho2 / c2, grad)
}

/// `(v, gradient)`: aspect-ratio consistency term of CIoU.
fn aspect_penalty(pred: &CenterBox, gt: &CenterBox) -> (f64, Gradient) {
    let k = 4.0 / (PI * PI);
    let delta = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    let norm = pred.w * pred.w + pred.h * pred.h;
    let grad = [
        0.0,
        0.0,
        -2.0 * k * delta * pred.h / norm,
        2.0 * k * delta * pred.w / norm,
    ];
    (k * delta * delta, grad)
}

/// CIoU trade-off weight `v / ((1 - IoU) + v)`, zero when both vanish.
fn ciou_alpha(iou: f64, v: f64) -> f64 {
    let denom = (1.0 - iou) + v;
    if denom > 0.0 {
        v / denom
    } else {
        0.0
    }
}

pub fn iou(a: &CenterBox, b: &CenterBox) -> f64 {
    scaled_overlap(a, b, Ratio::ONE).iou
}

pub fn inner_iou(pred: &CenterBox, gt: &CenterBox, ratio: Ratio) -> f64 {
    scaled_overlap(pred, gt, ratio).iou
}

pub fn giou_loss(pred: &CenterBox, gt: &CenterBox) -> f64 {
    let o = scaled_overlap(pred, gt, Ratio::ONE);
    let e = enclosure(pred, gt);
    let c = e.cw * e.ch;
    1.0 - o.iou + (c - o.union) / c
}

pub fn diou_loss(pred: &CenterBox, gt: &CenterBox) -> f64 {
    1.0 - iou(pred, gt) + distance_penalty(pred, gt).0
}

pub fn ciou_loss(pred: &CenterBox, gt: &CenterBox) -> f64 {
    let iou = iou(pred, gt);
    let (v, _) = aspect_penalty(pred, gt);
    1.0 - iou + distance_penalty(pred, gt).0 + ciou_alpha(iou, v) * v
}

/// `L_CIoU + IoU − IoU_inner`.
pub fn inner_ciou_loss(pred: &CenterBox, gt: &CenterBox, ratio: Ratio) -> f64 {
    ciou_loss(pred, gt) + iou(pred, gt) - inner_iou(pred, gt, ratio)
}

pub fn loss(kind: LossKind, pred: &CenterBox, gt: &CenterBox, ratio: Ratio) -> f64 {
    match kind {
        LossKind::Iou => 1.0 - iou(pred, gt),
        LossKind::Giou => giou_loss(pred, gt),
        LossKind::Diou => diou_loss(pred, gt),
        LossKind::Ciou => ciou_loss(pred, gt),
        LossKind::InnerIou => 1.0 - inner_iou(pred, gt, ratio),
        LossKind::InnerCiou => inner_ciou_loss(pred, gt, ratio),
    }
}

/// Loss value and gradient with the same conventions as [`loss_gradient`],
/// without the differentiability check.
pub fn loss_and_gradient(
    kind: LossKind,
    pred: &CenterBox,
    gt: &CenterBox,
    ratio: Ratio,
) -> (f64, Gradient) {
    let plain = scaled_overlap(pred, gt, Ratio::ONE);
    let ciou = || {
        let (dist, d_dist) = distance_penalty(pred, gt);
        let (v, d_v) = aspect_penalty(pred, gt);
        let alpha = ciou_alpha(plain.iou, v);
        (
            1.0 - plain.iou + dist + alpha * v,
            add(sub(d_dist, plain.d_iou), scale(d_v, alpha)),
        )
    };
    match kind {
        LossKind::Iou => (1.0 - plain.iou, scale(plain.d_iou, -1.0)),
        LossKind::Giou => {
            let e = enclosure(pred, gt);
            let c = e.cw * e.ch;
            let d_c = add(scale(e.d_cw, e.ch), scale(e.d_ch, e.cw));
            // 1 - IoU + (C - U)/C = 2 - IoU - U/C
            let d_ratio = scale(sub(scale(plain.d_union, c), scale(d_c, plain.union)), 1.0 / (c * c));
            (
                1.0 - plain.iou + (c - plain.union) / c,
                scale(add(plain.d_iou, d_ratio), -1.0),
            )
        }
        LossKind::Diou => {
            let (dist, d_dist) = distance_penalty(pred, gt);
            (1.0 - plain.iou + dist, sub(d_dist, plain.d_iou))
        }
        LossKind::Ciou => ciou(),
        LossKind::InnerIou => {
            let inner = scaled_overlap(pred, gt, ratio);
            (1.0 - inner.iou, scale(inner.d_iou, -1.0))
        }
        LossKind::InnerCiou => {
            let inner = scaled_overlap(pred, gt, ratio);
            let (l, g) = ciou();
            (l + plain.iou - inner.iou, sub(add(g, plain.d_iou), inner.d_iou))
        }
    }
}

/// Describes an edge contact along one axis that puts the clamped overlap
/// on its kink (zero overlap on this axis, positive on the other).
fn touching(p: &InnerBox, g: &InnerBox) -> Option<&'static str> {
    let ox = p.right.min(g.right) - p.left.max(g.left);
    let oy = p.bottom.min(g.bottom) - p.top.max(g.top);
    if ox == 0.0 && oy > 0.0 {
        Some("boxes touch along a vertical edge")
    } else if oy == 0.0 && ox > 0.0 {
        Some("boxes touch along a horizontal edge")
    } else {
        None
    }
}

/// Analytic gradient `(∂L/∂x_c, ∂L/∂y_c, ∂L/∂w, ∂L/∂h)` of the chosen loss.
pub fn loss_gradient(
    kind: LossKind,
    pred: &CenterBox,
    gt: &CenterBox,
    ratio: Ratio,
) -> Result<Gradient> {
    if kind.uses_plain_overlap() {
        if let Some(why) = touching(&pred.inner(Ratio::ONE), &gt.inner(Ratio::ONE)) {
            return Err(Error::NonDifferentiable(why.into()));
        }
    }
    if kind.uses_inner_overlap() {
        if let Some(why) = touching(&pred.inner(ratio), &gt.inner(ratio)) {
            return Err(Error::NonDifferentiable(format!("auxiliary {why}")));
        }
    }
    Ok(loss_and_gradient(kind, pred, gt, ratio).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub pred: CenterBox,
    pub iou: f64,
    pub loss: f64,
    /// Width or height hit [`MIN_SIDE`] on the update that produced this box.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// First step index at which IoU reaches `threshold`.
    pub fn steps_to_iou(&self, threshold: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.iou >= threshold).map(|s| s.step)
    }

    pub fn last(&self) -> &TrajectoryStep {
        self.steps.last().expect("trajectory always holds the initial box")
    }
}

/// Plain gradient descent on `kind` from `init` toward `gt`. Entry 0 is the
/// initial box; one entry per update follows.
pub fn regress_box(
    init: &CenterBox,
    gt: &CenterBox,
    kind: LossKind,
    ratio: Ratio,
    steps: usize,
    learning_rate: f64,
) -> Result<Trajectory> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::invalid(
            "learning rate",
            format!("must be positive, got {learning_rate}"),
        ));
    }
    let mut pred = *init;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut value, mut grad) = loss_and_gradient(kind, &pred, gt, ratio);
    out.push(TrajectoryStep {
        step: 0,
        pred,
        iou: iou(&pred, gt),
        loss: value,
        clamped: false,
    });
    for step in 1..=steps {
        let mut next = [0.0; 4];
        for k in 0..4 {
            next[k] = pred.to_array()[k] - learning_rate * grad[k];
        }
        let mut clamped = false;
        for side in &mut next[2..] {
            if !(*side > MIN_SIDE) {
                *side = MIN_SIDE;
                clamped = true;
            }
        }
        pred = CenterBox {
            x_c: next[0],
            y_c: next[1],
            w: next[2],
            h: next[3],
        };
        (value, grad) = loss_and_gradient(kind, &pred, gt, ratio);
        out.push(TrajectoryStep {
            step,
            pred,
            iou: iou(&pred, gt),
            loss: value,
            clamped,
        });
    }
    Ok(Trajectory { steps: out })
}
