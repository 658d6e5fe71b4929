//! Per-pixel guiding distribution: a truncated 2D Gaussian over the unit
//! square (lifted to directions by [`crate::sgmap`]) blended with the surface
//! BRDF, plus the online EM update that trains it.
//!
//! The mixture density per steradian at a local direction `ω` is
//!
//! ```text
//! D(ω) = π' · N(M⁻¹(ω); μ, Σ) / (Z · 2π) + (1 − π') · p_brdf(ω)
//! ```
//!
//! where `Z` is the Gaussian mass inside the square and `π'` is the stored
//! mixing coefficient scaled by the probability that rejection sampling of
//! the truncated Gaussian succeeds within [`MAX_REJECTION_TRIES`] attempts.
//! Failed rejection falls back to the BRDF, so `π'` keeps the evaluated pdf
//! identical to the density the sampler actually draws from.

use std::f64::consts::TAU;

use rand::Rng;

use crate::math::Vec3;
use crate::sgmap::{self, SquarePoint};

pub const PI_MIN: f32 = 0.05;
pub const PI_MAX: f32 = 0.95;
pub const DEFAULT_KMAX: f64 = 64.0;
pub const MAX_REJECTION_TRIES: usize = 16;

const COV_EPS: f64 = 1e-4;
const EIG_MIN: f64 = 1e-6;
const RESET_VAR: f64 = 0.05;
const Z_MIN: f64 = 1e-4;
const BATCH_WEIGHT_FLOOR: f64 = 1e-8;

/// The eight scalars stored per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidingStats {
    pub mean_x: f32,
    pub mean_y: f32,
    pub m2_xx: f32,
    pub m2_yy: f32,
    pub m2_xy: f32,
    pub w_sum: f32,
    pub pi: f32,
    pub k: f32,
}

impl Default for GuidingStats {
    fn default() -> Self {
        init_stats()
    }
}

/// Fresh model for a pixel with no usable history: centred mean, `Σ = 0.25·I`.
pub fn init_stats() -> GuidingStats {
    GuidingStats {
        mean_x: 0.5,
        mean_y: 0.5,
        m2_xx: 0.5,
        m2_yy: 0.5,
        m2_xy: 0.25,
        w_sum: 0.0,
        pi: PI_MIN,
        k: 0.0,
    }
}

impl GuidingStats {
    pub fn to_array(&self) -> [f32; 8] {
        [
            self.mean_x,
            self.mean_y,
            self.m2_xx,
            self.m2_yy,
            self.m2_xy,
            self.w_sum,
            self.pi,
            self.k,
        ]
    }

    pub fn from_array(a: [f32; 8]) -> Self {
        GuidingStats {
            mean_x: a[0],
            mean_y: a[1],
            m2_xx: a[2],
            m2_yy: a[3],
            m2_xy: a[4],
            w_sum: a[5],
            pi: a[6],
            k: a[7],
        }
    }

    /// Whether the model has been trained at least once since (re)initialisation.
    pub fn has_history(&self) -> bool {
        self.k >= 1.0
    }

    pub fn is_valid(&self) -> bool {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        let mx = self.mean_x as f64;
        let my = self.mean_y as f64;
        finite
            && (PI_MIN..=PI_MAX).contains(&self.pi)
            && self.k >= 0.0
            && self.w_sum >= 0.0
            && (0.0..=1.0).contains(&self.mean_x)
            && (0.0..=1.0).contains(&self.mean_y)
            && (self.w_sum == 0.0
                || (self.m2_xx as f64 >= mx * mx - 1e-6 && self.m2_yy as f64 >= my * my - 1e-6))
    }
}

/// Gaussian component derived from a [`GuidingStats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLobe {
    pub mu: SquarePoint,
    /// Symmetric covariance `[[s_xx, s_xy], [s_xy, s_yy]]`.
    pub sigma: [[f64; 2]; 2],
    /// Lower-triangular Cholesky factor, `[[l11, 0], [l21, l22]]`.
    pub chol_l: [[f64; 2]; 2],
    /// Gaussian mass inside the unit square.
    pub trunc_z: f64,
    inv: [[f64; 2]; 2],
    norm: f64,
    accept: f64,
}

fn eigenvalues(s: [[f64; 2]; 2]) -> (f64, f64) {
    let half_tr = 0.5 * (s[0][0] + s[1][1]);
    let half_diff = 0.5 * (s[0][0] - s[1][1]);
    let disc = (half_diff * half_diff + s[0][1] * s[0][1]).sqrt();
    (half_tr - disc, half_tr + disc)
}

impl GaussianLobe {
    /// Builds a lobe from an explicit mean and covariance. The covariance is
    /// used as given; it must be symmetric positive definite.
    pub fn new(mu: SquarePoint, sigma: [[f64; 2]; 2]) -> Self {
        let l11 = sigma[0][0].sqrt();
        let l21 = sigma[0][1] / l11;
        let l22 = (sigma[1][1] - l21 * l21).max(0.0).sqrt();
        let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[0][1];
        let inv = [
            [sigma[1][1] / det, -sigma[0][1] / det],
            [-sigma[0][1] / det, sigma[0][0] / det],
        ];
        let mut lobe = GaussianLobe {
            mu,
            sigma,
            chol_l: [[l11, 0.0], [l21, l22]],
            trunc_z: 1.0,
            inv,
            norm: 1.0 / (TAU * det.sqrt()),
            accept: 1.0,
        };
        lobe.trunc_z = truncation_mass(&lobe);
        lobe.accept = 1.0 - (1.0 - lobe.trunc_z).powi(MAX_REJECTION_TRIES as i32);
        lobe
    }

    /// Untruncated Gaussian density at `(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mu.u;
        let dy = y - self.mu.v;
        let q = dx * (self.inv[0][0] * dx + self.inv[0][1] * dy)
            + dy * (self.inv[1][0] * dx + self.inv[1][1] * dy);
        self.norm * (-0.5 * q).exp()
    }

    /// Maps standard-normal coordinates to the lobe: `μ + L·z`.
    pub fn transform(&self, z0: f64, z1: f64) -> (f64, f64) {
        let l = self.chol_l;
        (self.mu.u + l[0][0] * z0, self.mu.v + l[1][0] * z0 + l[1][1] * z1)
    }

    /// Probability that rejection sampling lands in the square within the
    /// allowed number of attempts.
    pub fn acceptance(&self) -> f64 {
        self.accept
    }
}

/// Mean and regularised covariance of the stored moments.
///
/// A covariance with an eigenvalue below `1e-6` (degenerate or inconsistent
/// moments) is replaced by `0.05·I`; otherwise `1e-4·I` is added.
pub fn lobe_from_stats(s: &GuidingStats) -> GaussianLobe {
    let finite = s.to_array().iter().all(|v| v.is_finite());
    let (mx, my) = if finite {
        ((s.mean_x as f64).clamp(0.0, 1.0), (s.mean_y as f64).clamp(0.0, 1.0))
    } else {
        (0.5, 0.5)
    };
    let raw = [
        [s.m2_xx as f64 - mx * mx, s.m2_xy as f64 - mx * my],
        [s.m2_xy as f64 - mx * my, s.m2_yy as f64 - my * my],
    ];
    let (lo, hi) = eigenvalues(raw);
    let sigma = if !finite || !(lo >= EIG_MIN) || !hi.is_finite() {
        [[RESET_VAR, 0.0], [0.0, RESET_VAR]]
    } else {
        [[raw[0][0] + COV_EPS, raw[0][1]], [raw[1][0], raw[1][1] + COV_EPS]]
    };
    GaussianLobe::new(SquarePoint::new(mx, my), sigma)
}

/// Mass of the lobe's Gaussian inside `[0,1]²`, clamped to `[1e-4, 1]`.
pub fn truncation_mass(lobe: &GaussianLobe) -> f64 {
    let sx = lobe.sigma[0][0].sqrt();
    let sy = lobe.sigma[1][1].sqrt();
    let rho = (lobe.sigma[0][1] / (sx * sy)).clamp(-1.0, 1.0);
    let lx = -lobe.mu.u / sx;
    let ux = (1.0 - lobe.mu.u) / sx;
    let ly = -lobe.mu.v / sy;
    let uy = (1.0 - lobe.mu.v) / sy;
    let z = bvn::upper(lx, ly, rho) - bvn::upper(ux, ly, rho) - bvn::upper(lx, uy, rho)
        + bvn::upper(ux, uy, rho);
    z.clamp(Z_MIN, 1.0)
}

/// Truncated Gaussian density over the square; zero outside it.
pub fn gaussian_pdf_square(lobe: &GaussianLobe, p: SquarePoint) -> f64 {
    if !SquarePoint::contains(p.u, p.v) {
        return 0.0;
    }
    lobe.density(p.u, p.v) / lobe.trunc_z
}

/// `pi·gauss + (1 − pi)·brdf`, both per steradian.
#[inline]
pub fn blend_pdf(pi: f64, gauss_pdf_sr: f64, brdf_pdf_sr: f64) -> f64 {
    pi * gauss_pdf_sr + (1.0 - pi) * brdf_pdf_sr
}

/// Mixture density per steradian of the local direction `dir`.
pub fn mixture_pdf(s: &GuidingStats, lobe: &GaussianLobe, dir: Vec3, brdf_pdf: f64) -> f64 {
    let g = match sgmap::hemisphere_to_square(dir) {
        Ok(p) => sgmap::square_density_to_solid_angle(gaussian_pdf_square(lobe, p)),
        Err(_) => 0.0,
    };
    blend_pdf(s.pi as f64 * lobe.acceptance(), g, brdf_pdf)
}

/// Two independent standard normals from two uniforms. `u1 = 0` is clamped to `1e-12`.
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.max(1e-12).ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Brdf,
    Gaussian,
}

/// BRDF sampling routine in the local shading frame (normal = +z).
pub trait BrdfLobe {
    /// A direction drawn from the BRDF sampling density, or `None` when the
    /// draw is degenerate (e.g. below the surface).
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec3>;
    /// Density per steradian of [`BrdfLobe::sample`].
    fn pdf(&self, dir: Vec3) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSample {
    pub dir: Vec3,
    pub pdf: f64,
    pub strategy: Strategy,
}

/// One-sample draw from the mixture. Returns `None` when the BRDF branch
/// produced a degenerate sample; the caller treats that as a zero-valued
/// sample.
pub fn sample_mixture<B, R>(
    s: &GuidingStats,
    lobe: &GaussianLobe,
    brdf: &B,
    rng: &mut R,
) -> Option<MixtureSample>
where
    B: BrdfLobe,
    R: Rng + ?Sized,
{
    let zeta: f64 = rng.random();
    let mut gaussian = None;
    if zeta < s.pi as f64 {
        for _ in 0..MAX_REJECTION_TRIES {
            let u1 = 1.0 - rng.random::<f64>();
            let u2 = rng.random::<f64>();
            let (z0, z1) = box_muller(u1, u2);
            let (x, y) = lobe.transform(z0, z1);
            if SquarePoint::contains(x, y) {
                gaussian = Some(SquarePoint::new(x, y));
                break;
            }
        }
    }
    let (dir, strategy) = match gaussian {
        Some(p) => (sgmap::square_to_hemisphere(p), Strategy::Gaussian),
        None => (brdf.sample(rng)?, Strategy::Brdf),
    };
    let pdf = mixture_pdf(s, lobe, dir, brdf.pdf(dir));
    Some(MixtureSample { dir, pdf, strategy })
}

/// Posterior probability that a direction came from the Gaussian component.
pub fn e_step_responsibility(pi: f64, gauss_pdf_sr: f64, brdf_pdf_sr: f64) -> f64 {
    let g = pi * gauss_pdf_sr;
    let total = g + (1.0 - pi) * brdf_pdf_sr;
    if total > 0.0 && total.is_finite() {
        (g / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// A training observation: where a direction lands in the square and how
/// much `L_i·f_r·cosθ` luminance it carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadianceSampleRec {
    pub sq: SquarePoint,
    pub dir: Vec3,
    pub weight: f64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub rec: RadianceSampleRec,
    pub resp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStep {
    pub stats: GuidingStats,
    /// Records dropped because of a non-finite or negative weight.
    pub skipped: usize,
}

/// Step size of the online update after `k` epochs.
pub fn learning_rate(k: f64, kmax: f64) -> f64 {
    (1.0 / (k + 1.0)).max(1.0 / kmax)
}

/// Blends the batch's responsibility-weighted moments into the running
/// moments with step `max(1/(k+1), 1/kMax)`, updates the mixing coefficient
/// from the Gaussian's share of the batch weight, and advances the epoch.
///
/// A batch carrying no weight leaves the stats untouched.
pub fn m_step_update(s: &GuidingStats, batch: &[TrainingSample], kmax: f64) -> MStep {
    let mut skipped = 0;
    let mut w_total = 0.0;
    let mut b = 0.0;
    let mut acc = [0.0f64; 5];
    for t in batch {
        debug_assert_eq!(t.rec.strategy, Strategy::Brdf);
        let w = t.rec.weight;
        let r = t.resp;
        if !w.is_finite() || w < 0.0 || !r.is_finite() {
            skipped += 1;
            continue;
        }
        let (x, y) = (t.rec.sq.u, t.rec.sq.v);
        let wr = w * r;
        w_total += w;
        b += wr;
        acc[0] += wr * x;
        acc[1] += wr * y;
        acc[2] += wr * x * x;
        acc[3] += wr * y * y;
        acc[4] += wr * x * y;
    }
    if w_total <= 0.0 {
        return MStep { stats: *s, skipped };
    }

    let eta = learning_rate(s.k as f64, kmax);
    let blend = |old: f32, new: f64| ((1.0 - eta) * old as f64 + eta * new) as f32;
    let mut out = *s;
    if b > BATCH_WEIGHT_FLOOR {
        out.mean_x = blend(s.mean_x, acc[0] / b).clamp(0.0, 1.0);
        out.mean_y = blend(s.mean_y, acc[1] / b).clamp(0.0, 1.0);
        out.m2_xx = blend(s.m2_xx, acc[2] / b);
        out.m2_yy = blend(s.m2_yy, acc[3] / b);
        out.m2_xy = blend(s.m2_xy, acc[4] / b);
    }
    out.pi = blend(s.pi, b / w_total.max(BATCH_WEIGHT_FLOOR)).clamp(PI_MIN, PI_MAX);
    out.w_sum = blend(s.w_sum, b).max(0.0);
    out.k = s.k + 1.0;
    MStep { stats: out, skipped }
}

/// Number of VPL candidates to gather after `k` training epochs:
/// `(1 − k/kMax)·15 + 5`, rounded half-up.
pub fn neighbor_count(k: f64, kmax: f64) -> usize {
    let frac = k.max(0.0).min(kmax) / kmax;
    let n = (1.0 - frac) * 15.0 + 5.0;
    ((n + 0.5).floor() as usize).clamp(5, 20)
}

/// Standard bivariate normal upper-orthant probabilities.
mod bvn {
    use std::f64::consts::{SQRT_2, TAU};

    const W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
    const X6: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
    const W12: [f64; 6] = [
        0.047_175_336_386_511_77,
        0.106_939_325_995_318_3,
        0.160_078_328_543_346_4,
        0.203_167_426_723_065_9,
        0.233_492_536_538_354_7,
        0.249_147_045_813_402_9,
    ];
    const X12: [f64; 6] = [
        0.981_560_634_246_719_1,
        0.904_117_256_370_475,
        0.769_902_674_194_305,
        0.587_317_954_286_617_1,
        0.367_831_498_998_180_2,
        0.125_233_408_511_469_2,
    ];
    const W20: [f64; 10] = [
        0.017_614_007_139_152_12,
        0.040_601_429_800_386_94,
        0.062_672_048_334_109_06,
        0.083_276_741_576_704_75,
        0.101_930_119_817_240_4,
        0.118_194_531_961_518_4,
        0.131_688_638_449_176_6,
        0.142_096_109_318_382_1,
        0.149_172_986_472_603_7,
        0.152_753_387_130_725_9,
    ];
    const X20: [f64; 10] = [
        0.993_128_599_185_094_9,
        0.963_971_927_277_913_8,
        0.912_234_428_251_326,
        0.839_116_971_822_218_8,
        0.746_331_906_460_150_8,
        0.636_053_680_726_515,
        0.510_867_001_950_827_1,
        0.373_706_088_715_419_6,
        0.227_785_851_141_645_1,
        0.076_526_521_133_497_33,
    ];

    /// Standard normal CDF.
    pub fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / SQRT_2)
    }

    /// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`.
    /// Genz's Gauss–Legendre scheme on the Plackett/Drezner–Wesolowsky
    /// integral; accurate to roughly 1e-15.
    pub fn upper(h: f64, k: f64, r: f64) -> f64 {
        if h == f64::INFINITY || k == f64::INFINITY {
            return 0.0;
        }
        if h == f64::NEG_INFINITY {
            return if k == f64::NEG_INFINITY { 1.0 } else { phi(-k) };
        }
        if k == f64::NEG_INFINITY {
            return phi(-h);
        }
        if r == 0.0 {
            return phi(-h) * phi(-k);
        }
        let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
            (&W6, &X6)
        } else if r.abs() < 0.75 {
            (&W12, &X12)
        } else {
            (&W20, &X20)
        };
        let mut k = k;
        let mut hk = h * k;
        let mut bvn = 0.0;
        if r.abs() < 0.925 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin() / 2.0;
            for (&wi, &xi) in w.iter().zip(x) {
                for s in [-1.0, 1.0] {
                    let sn = (asr * (1.0 + s * xi)).sin();
                    bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn = bvn * asr / TAU + phi(-h) * phi(-k);
        } else {
            if r < 0.0 {
                k = -k;
                hk = -hk;
            }
            if r.abs() < 1.0 {
                let as_ = 1.0 - r * r;
                let mut a = as_.sqrt();
                let bs = (h - k) * (h - k);
                let c = (4.0 - hk) / 8.0;
                let d = (12.0 - hk) / 80.0;
                let asr = -(bs / as_ + hk) / 2.0;
                if asr > -100.0 {
                    bvn = a
                        * asr.exp()
                        * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
                }
                if hk > -100.0 {
                    let b = bs.sqrt();
                    let sp = TAU.sqrt() * phi(-b / a);
                    bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
                }
                a /= 2.0;
                let mut sum = 0.0;
                for (&wi, &xi) in w.iter().zip(x) {
                    for s in [-1.0, 1.0] {
                        let xs = (a * (1.0 + s * xi)).powi(2);
                        let asr = -(bs / xs + hk) / 2.0;
                        if asr > -100.0 {
                            let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                            let rs = (1.0 - xs).sqrt();
                            let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                            sum += wi * asr.exp() * (sp - ep);
                        }
                    }
                }
                bvn = (a * sum - bvn) / TAU;
            }
            if r > 0.0 {
                bvn += phi(-h.max(k));
            } else if h >= k {
                bvn = -bvn;
            } else {
                let l = if h < 0.0 { phi(k) - phi(h) } else { phi(-h) - phi(-k) };
                bvn = l - bvn;
            }
        }
        bvn.clamp(0.0, 1.0)
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    fn iso(mu: (f64, f64), var: f64) -> GaussianLobe {
        GaussianLobe::new(SquarePoint::new(mu.0, mu.1), [[var, 0.0], [0.0, var]])
    }

    #[test]
    fn init_matches_prior() {
        let s = init_stats();
        assert_eq!(s.pi, 0.05);
        assert_eq!(s.k, 0.0);
        assert!(s.is_valid());
        let lobe = lobe_from_stats(&s);
        assert_eq!(lobe.mu, SquarePoint::new(0.5, 0.5));
        assert!((lobe.sigma[0][0] - 0.2501).abs() < 1e-12);
        assert!((lobe.sigma[1][1] - 0.2501).abs() < 1e-12);
        assert!(lobe.sigma[0][1].abs() < 1e-12);
    }

    #[test]
    fn zero_variance_moments_reset_covariance() {
        let mut s = init_stats();
        s.mean_x = 0.25;
        s.mean_y = 0.75;
        s.m2_xx = 0.0625;
        s.m2_yy = 0.5625;
        s.m2_xy = 0.1875;
        s.w_sum = 1.0;
        let lobe = lobe_from_stats(&s);
        assert_eq!(lobe.sigma, [[0.05, 0.0], [0.0, 0.05]]);
        assert_eq!(lobe.mu, SquarePoint::new(0.25, 0.75));
    }

    #[test]
    fn lobe_is_positive_definite_for_garbage_stats() {
        let cases = [
            GuidingStats::from_array([f32::NAN, 0.2, 0.1, 0.1, 0.0, 1.0, 0.5, 3.0]),
            GuidingStats::from_array([0.9, 0.1, -5.0, 3.0, 40.0, 1.0, 0.5, 3.0]),
            GuidingStats::from_array([2.0, -1.0, 1e30, 1e30, 0.0, 1.0, 0.5, 3.0]),
            GuidingStats::from_array([0.5, 0.5, 0.25, 0.25, 0.25, 1.0, 0.5, 3.0]),
        ];
        for s in cases {
            let l = lobe_from_stats(&s);
            let (lo, _) = eigenvalues(l.sigma);
            assert!(lo >= 1e-6, "{s:?} -> {:?}", l.sigma);
            assert!(l.trunc_z > 0.0 && l.trunc_z <= 1.0);
        }
    }

    #[test]
    fn tight_centered_lobe_has_unit_mass() {
        let l = iso((0.5, 0.5), 1e-4);
        assert!((l.trunc_z - 1.0).abs() < 1e-3);
    }

    #[test]
    fn very_wide_lobe_hits_mass_clamp() {
        // Flat-density limit: 1/(2π·10⁴) ≈ 1.59e-5, below the 1e-4 floor.
        let l = iso((0.5, 0.5), 1e4);
        assert_eq!(l.trunc_z, 1e-4);
    }

    #[test]
    fn edge_centered_lobe_keeps_half_its_mass() {
        let l = iso((0.0, 0.5), 0.01 * 0.01);
        assert!((l.trunc_z - 0.5).abs() < 0.01, "{}", l.trunc_z);
    }

    #[test]
    fn truncation_mass_matches_dense_quadrature() {
        // Independent oracle: 800x800 midpoint rule on the untruncated density.
        let lobes = [
            GaussianLobe::new(SquarePoint::new(0.3, 0.6), [[0.04, 0.01], [0.01, 0.02]]),
            GaussianLobe::new(SquarePoint::new(0.9, 0.1), [[0.09, -0.08], [-0.08, 0.09]]),
            GaussianLobe::new(SquarePoint::new(0.5, 0.5), [[0.2501, 0.2499], [0.2499, 0.2501]]),
            iso((0.05, 0.95), 0.3),
        ];
        let n = 800;
        let h = 1.0 / n as f64;
        for l in lobes {
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    sum += l.density((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                }
            }
            let oracle = sum * h * h;
            assert!((l.trunc_z - oracle).abs() < 2e-4, "{:?}: {} vs {}", l.sigma, l.trunc_z, oracle);
        }
    }

    #[test]
    fn gaussian_peak_and_one_sigma_falloff() {
        let l = iso((0.5, 0.5), 0.01);
        let peak = gaussian_pdf_square(&l, SquarePoint::new(0.5, 0.5));
        assert!((peak - 15.915_494_309 / l.trunc_z).abs() < 1e-6);
        let off = gaussian_pdf_square(&l, SquarePoint::new(0.6, 0.5));
        assert!((off - (-0.5f64).exp() * peak).abs() < 1e-9);
        assert_eq!(gaussian_pdf_square(&l, SquarePoint::new(1.2, 0.5)), 0.0);
    }

    #[test]
    fn blend_is_linear() {
        // 0.6283185 per unit square = 0.1 per steradian
        let g = sgmap::square_density_to_solid_angle(0.628_318_530_7);
        assert!((blend_pdf(0.5, g, 0.3) - 0.2).abs() < 1e-9);
        assert!((blend_pdf(0.05, 0.0, 0.7) - 0.95 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn box_muller_closed_forms() {
        let (z0, z1) = box_muller(0.5, 0.5);
        assert!((z0 + 1.177_410_022_515_474_7).abs() < 1e-12);
        assert!(z1.abs() < 1e-12);
        assert_eq!(box_muller(1.0, 0.37), (0.0, 0.0));
        let (a, b) = box_muller(0.0, 0.25);
        assert!(a.is_finite() && b.is_finite());
    }

    #[test]
    fn box_muller_moments() {
        let mut rng = Pcg64Mcg::seed_from_u64(17);
        let n = 1_000_000;
        let (mut s0, mut s1, mut q0, mut q1) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n / 2 {
            let (a, b) = box_muller(1.0 - rng.random::<f64>(), rng.random());
            s0 += a;
            s1 += b;
            q0 += a * a;
            q1 += b * b;
        }
        let m = (n / 2) as f64;
        for (s, q) in [(s0, q0), (s1, q1)] {
            let mean = s / m;
            let var = q / m - mean * mean;
            assert!(mean.abs() < 0.005, "mean {mean}");
            assert!((var - 1.0).abs() < 0.01, "var {var}");
        }
    }

    #[test]
    fn responsibilities() {
        assert_eq!(e_step_responsibility(0.5, 1.0, 1.0), 0.5);
        assert_eq!(e_step_responsibility(0.5, 1.0, 0.0), 1.0);
        assert!((e_step_responsibility(0.25, 2.0, 1.0) - 0.4).abs() < 1e-15);
        assert_eq!(e_step_responsibility(0.5, 0.0, 0.0), 0.0);
    }

    fn rec(u: f64, v: f64, w: f64, r: f64) -> TrainingSample {
        let sq = SquarePoint::new(u, v);
        TrainingSample {
            rec: RadianceSampleRec {
                sq,
                dir: sgmap::square_to_hemisphere(sq),
                weight: w,
                strategy: Strategy::Brdf,
            },
            resp: r,
        }
    }

    #[test]
    fn empty_batch_is_identity() {
        let s = init_stats();
        let out = m_step_update(&s, &[], 64.0);
        assert_eq!(out.stats, s);
        let out = m_step_update(&s, &[rec(0.2, 0.2, 0.0, 1.0)], 64.0);
        assert_eq!(out.stats, s);
    }

    #[test]
    fn first_epoch_replaces_moments() {
        let out = m_step_update(&init_stats(), &[rec(0.3, 0.7, 1.0, 1.0)], 64.0).stats;
        assert!((out.mean_x - 0.3).abs() < 1e-7);
        assert!((out.mean_y - 0.7).abs() < 1e-7);
        assert!((out.m2_xx - 0.09).abs() < 1e-7);
        assert!((out.m2_yy - 0.49).abs() < 1e-7);
        assert!((out.m2_xy - 0.21).abs() < 1e-7);
        assert_eq!(out.pi, 0.95);
        assert_eq!(out.k, 1.0);
    }

    #[test]
    fn non_finite_weights_are_skipped() {
        let out = m_step_update(
            &init_stats(),
            &[rec(0.3, 0.7, f64::NAN, 1.0), rec(0.3, 0.7, f64::INFINITY, 1.0), rec(0.3, 0.7, 2.0, 1.0)],
            64.0,
        );
        assert_eq!(out.skipped, 2);
        assert!((out.stats.mean_x - 0.3).abs() < 1e-7);
    }

    #[test]
    fn concentrated_samples_recover_mean() {
        // Oracle: brute-force weighted mean of the same samples.
        let mut rng = Pcg64Mcg::seed_from_u64(5);
        let mut s = init_stats();
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for _ in 0..100 {
            let batch: Vec<_> = (0..100)
                .map(|_| {
                    let u = 0.3 + rng.random_range(-1e-3..1e-3);
                    let v = 0.7 + rng.random_range(-1e-3..1e-3);
                    let w = rng.random_range(0.1..2.0);
                    sw += w;
                    sx += w * u;
                    sy += w * v;
                    rec(u, v, w, 1.0)
                })
                .collect();
            s = m_step_update(&s, &batch, 1e9).stats;
        }
        let lobe = lobe_from_stats(&s);
        assert!((lobe.mu.u - sx / sw).abs() < 1e-3 && (lobe.mu.u - 0.3).abs() < 1e-3);
        assert!((lobe.mu.v - sy / sw).abs() < 1e-3 && (lobe.mu.v - 0.7).abs() < 1e-3);
    }

    #[test]
    fn neighbor_count_schedule() {
        assert_eq!(neighbor_count(0.0, 64.0), 20);
        assert_eq!(neighbor_count(64.0, 64.0), 5);
        assert_eq!(neighbor_count(32.0, 64.0), 13);
        assert_eq!(neighbor_count(500.0, 64.0), 5);
    }

    #[test]
    fn learning_rate_floors_at_kmax() {
        assert_eq!(learning_rate(0.0, 64.0), 1.0);
        assert_eq!(learning_rate(3.0, 64.0), 0.25);
        assert_eq!(learning_rate(1000.0, 64.0), 1.0 / 64.0);
    }
}
