//! Software rasterizer for the cart-pole scene.
//!
//! Draws a filled cart rectangle and a thick pole segment on a light
//! background at 128×128 RGB. Each pixel averages four subsamples (a 2×2
//! grid at ±0.25 of the pixel center), which encodes sub-pixel geometry in
//! the edge pixels — the downstream predictor recovers velocities from
//! exactly that information.
//!
//! Two deliberate numeric choices:
//!
//! * All horizontal coordinates are measured from the image center and every
//!   coverage expression is odd in (state, column); IEEE-754 rounding
//!   commutes with negation, so `render(s)` and `render(-s)` are exact
//!   horizontal mirror images.
//! * Palette channels are multiples of 16, so the 4-subsample average is an
//!   exact integer and a later 2×2 area downsample is an exact multiple of
//!   1/4 — the stored byte form of a frame loses nothing.

use super::{EnvParams, State};

pub const FRAME_WIDTH: usize = 128;
pub const FRAME_HEIGHT: usize = 128;
pub const FRAME_CHANNELS: usize = 3;

const BG: [u16; 3] = [240, 240, 240];
const CART: [u16; 3] = [0, 0, 0];
const POLE: [u16; 3] = [128, 64, 16];

const CART_HALF_WIDTH: f64 = 10.0;
const CART_TOP: f64 = 84.0;
const CART_BOTTOM: f64 = 94.0;
const POLE_LENGTH: f64 = 40.0;
const POLE_HALF_STROKE: f64 = 1.5;
/// Horizontal pixels per meter; ±position_bound maps to ±50 px around center.
const TRACK_HALF_SPAN: f64 = 50.0;

/// One rendered 128×128 RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    data: Vec<u8>,
}

impl Frame {
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * FRAME_WIDTH + col) * FRAME_CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Cart center in centered pixel coordinates, clamped so out-of-bound states
/// stay at the image edge instead of erroring.
fn cart_center_px(params: &EnvParams, x: f64) -> f64 {
    let clamped = x.clamp(-params.position_bound, params.position_bound);
    clamped * (TRACK_HALF_SPAN / params.position_bound)
}

/// Squared distance from point to segment, exactly odd under joint
/// horizontal negation of the point and the segment.
fn dist_sq_to_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let vx = bx - ax;
    let vy = by - ay;
    let wx = px - ax;
    let wy = py - ay;
    let len_sq = vx * vx + vy * vy;
    let t = if len_sq > 0.0 { ((wx * vx + wy * vy) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    let dx = wx - t * vx;
    let dy = wy - t * vy;
    dx * dx + dy * dy
}

struct Scene {
    cart_center: f64,
    pole_tip_x: f64,
    pole_tip_y: f64,
}

impl Scene {
    fn new(params: &EnvParams, state: &State) -> Self {
        let cart_center = cart_center_px(params, state.x);
        Scene {
            cart_center,
            pole_tip_x: cart_center + POLE_LENGTH * state.theta.sin(),
            pole_tip_y: CART_TOP - POLE_LENGTH * state.theta.cos(),
        }
    }

    /// Color at a subsample point; `u` is centered (column − 64), `y` is the
    /// plain row coordinate. Pole is drawn over the cart.
    fn sample(&self, u: f64, y: f64) -> &'static [u16; 3] {
        if dist_sq_to_segment(u, y, self.cart_center, CART_TOP, self.pole_tip_x, self.pole_tip_y)
            <= POLE_HALF_STROKE * POLE_HALF_STROKE
        {
            return &POLE;
        }
        let du = u - self.cart_center;
        if du.abs() <= CART_HALF_WIDTH && (CART_TOP..CART_BOTTOM).contains(&y) {
            return &CART;
        }
        &BG
    }
}

/// Render a state to a frame. Deterministic: identical states give
/// bit-identical frames.
pub fn render_state(params: &EnvParams, state: &State) -> Frame {
    let mut data = vec![0u8; FRAME_WIDTH * FRAME_HEIGHT * FRAME_CHANNELS];
    for px in data.chunks_exact_mut(3) {
        px[0] = BG[0] as u8;
        px[1] = BG[1] as u8;
        px[2] = BG[2] as u8;
    }
    let scene = Scene::new(params, state);

    // Conservative pixel regions holding the cart and the pole; pixels
    // outside stay background on both sides of a mirror pair, so clipping
    // cannot break symmetry.
    let cart_region = region(
        scene.cart_center - CART_HALF_WIDTH - 1.0,
        scene.cart_center + CART_HALF_WIDTH + 1.0,
        CART_TOP - 1.0,
        CART_BOTTOM + 1.0,
    );
    let margin = POLE_HALF_STROKE + 1.0;
    let pole_region = region(
        scene.cart_center.min(scene.pole_tip_x) - margin,
        scene.cart_center.max(scene.pole_tip_x) + margin,
        scene.pole_tip_y.min(CART_TOP) - margin,
        scene.pole_tip_y.max(CART_TOP) + margin,
    );

    for (c0, c1, r0, r1) in [cart_region, pole_region] {
        for row in r0..r1 {
            for col in c0..c1 {
                let mut sum = [0u16; 3];
                for (du, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let u = (col as f64 + du) - 64.0;
                    let y = row as f64 + dy;
                    let c = scene.sample(u, y);
                    sum[0] += c[0];
                    sum[1] += c[1];
                    sum[2] += c[2];
                }
                let i = (row * FRAME_WIDTH + col) * FRAME_CHANNELS;
                // Palette channels are multiples of 16: sums of four are
                // exact multiples of 4, so this division is exact.
                data[i] = (sum[0] / 4) as u8;
                data[i + 1] = (sum[1] / 4) as u8;
                data[i + 2] = (sum[2] / 4) as u8;
            }
        }
    }
    Frame { data }
}

/// Clip a centered-coordinate box to whole pixel ranges.
fn region(u_min: f64, u_max: f64, y_min: f64, y_max: f64) -> (usize, usize, usize, usize) {
    let c0 = ((u_min + 64.0).floor().max(0.0)) as usize;
    let c1 = ((u_max + 64.0).ceil().min(FRAME_WIDTH as f64).max(0.0)) as usize;
    let r0 = (y_min.floor().max(0.0)) as usize;
    let r1 = (y_max.ceil().min(FRAME_HEIGHT as f64).max(0.0)) as usize;
    (c0.min(FRAME_WIDTH), c1, r0.min(FRAME_HEIGHT), r1)
}
