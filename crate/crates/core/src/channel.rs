//! Rayleigh multipath channels for every link, pathloss-scaled and taken to
//! the subcarrier domain.
//!
//! Every link draws its taps from its own ChaCha stream, keyed by
//! `(seed, link kind, j, q, m)`. Adding users or elements therefore leaves
//! the draws of existing links untouched, which is what lets sweeps pair
//! realizations across variants.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

/// Frequency responses of all links of one fading block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub users: usize,
    pub subcarriers: usize,
    pub elements: usize,
    /// BS j -> UE q, indexed `[j][q][k]`.
    h_direct: Vec<Complex64>,
    /// RIS j element m -> UE q, indexed `[j][q][k][m]`.
    g_ris: Vec<Complex64>,
    /// BS q -> its own RIS q element m, indexed `[q][k][m]`.
    h_bs_ris: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum LinkKind {
    Direct = 1,
    RisToUe = 2,
    BsToRis = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of words into one 64-bit seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x5851_F42D_4C95_7F2D, |acc, w| splitmix64(acc ^ splitmix64(*w)))
}

/// Seed of Monte Carlo realization `index` under a master seed.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    mix_seed(&[master, 0x5245_414c, index])
}

fn link_rng(seed: u64, kind: LinkKind, j: usize, q: usize, m: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, kind as u64, j as u64, q as u64, m as u64]))
}

/// Draws `taps` i.i.d. CN(0, 1) samples scaled by `amplitude`.
fn draw_taps(rng: &mut ChaCha8Rng, taps: usize, amplitude: f64) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2 * amplitude;
    (0..taps)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// `K`-point transform of zero-padded taps:
/// `h[k] = sum_i taps[i] exp(-j 2 pi (k-1) i / K)` for `k = 1..K`.
pub fn dft_taps(taps: &[Complex64], subcarriers: usize) -> Result<Vec<Complex64>> {
    if taps.len() > subcarriers {
        return Err(Error::Dimension(format!(
            "{} taps exceed {} subcarriers",
            taps.len(),
            subcarriers
        )));
    }
    let kf = subcarriers as f64;
    Ok((0..subcarriers)
        .map(|k| {
            taps.iter()
                .enumerate()
                .map(|(i, t)| {
                    // reduce the phase index before scaling to keep the twiddles exact
                    let idx = (k * i) % subcarriers;
                    let angle = -2.0 * std::f64::consts::PI * idx as f64 / kf;
                    t * Complex64::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect())
}

/// Draws every link of `cfg` for the realization keyed by `seed`.
pub fn generate_channels(cfg: &ScenarioConfig, seed: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    let (nq, nk, nm, nl) = (cfg.users, cfg.subcarriers, cfg.active_elements(), cfg.taps);
    let g = &cfg.geometry;
    let pl = &cfg.pathloss;
    let mut set = ChannelSet::zeros(nq, nk, nm);

    for j in 0..nq {
        for q in 0..nq {
            let amp = pl.amplitude(&g.bs[j], &g.ue[q], pl.exponent_direct)?;
            let taps = draw_taps(&mut link_rng(seed, LinkKind::Direct, j, q, 0), nl, amp);
            for (k, h) in dft_taps(&taps, nk)?.into_iter().enumerate() {
                *set.direct_mut(j, q, k) = h;
            }
        }
    }
    if nm > 0 {
        for j in 0..nq {
            for q in 0..nq {
                let amp = pl.amplitude(&g.ris[j], &g.ue[q], pl.exponent_ris)?;
                for m in 0..nm {
                    let taps = draw_taps(&mut link_rng(seed, LinkKind::RisToUe, j, q, m), nl, amp);
                    for (k, h) in dft_taps(&taps, nk)?.into_iter().enumerate() {
                        *set.ris_to_ue_mut(j, q, k, m) = h;
                    }
                }
            }
        }
        for q in 0..nq {
            let amp = pl.amplitude(&g.bs[q], &g.ris[q], pl.exponent_ris)?;
            for m in 0..nm {
                let taps = draw_taps(&mut link_rng(seed, LinkKind::BsToRis, q, q, m), nl, amp);
                for (k, h) in dft_taps(&taps, nk)?.into_iter().enumerate() {
                    *set.bs_to_ris_mut(q, k, m) = h;
                }
            }
        }
    }
    Ok(set)
}

impl ChannelSet {
    pub fn zeros(users: usize, subcarriers: usize, elements: usize) -> Self {
        let (q, k, m) = (users, subcarriers, elements);
        ChannelSet {
            users,
            subcarriers,
            elements,
            h_direct: vec![Complex64::new(0.0, 0.0); q * q * k],
            g_ris: vec![Complex64::new(0.0, 0.0); q * q * k * m],
            h_bs_ris: vec![Complex64::new(0.0, 0.0); q * k * m],
        }
    }

    #[inline]
    fn di(&self, j: usize, q: usize, k: usize) -> usize {
        (j * self.users + q) * self.subcarriers + k
    }

    #[inline]
    fn gi(&self, j: usize, q: usize, k: usize, m: usize) -> usize {
        ((j * self.users + q) * self.subcarriers + k) * self.elements + m
    }

    #[inline]
    fn hi(&self, q: usize, k: usize, m: usize) -> usize {
        (q * self.subcarriers + k) * self.elements + m
    }

    /// Direct channel BS j -> UE q at subcarrier k.
    #[inline]
    pub fn direct(&self, j: usize, q: usize, k: usize) -> Complex64 {
        self.h_direct[self.di(j, q, k)]
    }

    pub fn direct_mut(&mut self, j: usize, q: usize, k: usize) -> &mut Complex64 {
        let i = self.di(j, q, k);
        &mut self.h_direct[i]
    }

    /// RIS j element m -> UE q at subcarrier k.
    #[inline]
    pub fn ris_to_ue(&self, j: usize, q: usize, k: usize, m: usize) -> Complex64 {
        self.g_ris[self.gi(j, q, k, m)]
    }

    pub fn ris_to_ue_mut(&mut self, j: usize, q: usize, k: usize, m: usize) -> &mut Complex64 {
        let i = self.gi(j, q, k, m);
        &mut self.g_ris[i]
    }

    /// All elements of RIS j -> UE q at subcarrier k.
    #[inline]
    pub fn ris_to_ue_row(&self, j: usize, q: usize, k: usize) -> &[Complex64] {
        let s = self.gi(j, q, k, 0);
        &self.g_ris[s..s + self.elements]
    }

    /// BS q -> RIS q element m at subcarrier k.
    #[inline]
    pub fn bs_to_ris(&self, q: usize, k: usize, m: usize) -> Complex64 {
        self.h_bs_ris[self.hi(q, k, m)]
    }

    pub fn bs_to_ris_mut(&mut self, q: usize, k: usize, m: usize) -> &mut Complex64 {
        let i = self.hi(q, k, m);
        &mut self.h_bs_ris[i]
    }

    #[inline]
    pub fn bs_to_ris_row(&self, q: usize, k: usize) -> &[Complex64] {
        let s = self.hi(q, k, 0);
        &self.h_bs_ris[s..s + self.elements]
    }

    pub fn is_finite(&self) -> bool {
        self.h_direct
            .iter()
            .chain(&self.g_ris)
            .chain(&self.h_bs_ris)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// FNV-1a digest of the direct links, as 16 hex digits. Realizations that
    /// share direct channels (the RIS and no-RIS variant of one seed) share it.
    pub fn direct_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.h_direct {
            for b in c.re.to_bits().to_le_bytes().into_iter().chain(c.im.to_bits().to_le_bytes()) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    /// JSON dump with complex values as `[re, im]` pairs.
    pub fn to_json(&self) -> Value {
        let c = |z: Complex64| json!([z.re, z.im]);
        let (nq, nk, nm) = (self.users, self.subcarriers, self.elements);
        let direct: Vec<Vec<Vec<Value>>> = (0..nq)
            .map(|j| (0..nq).map(|q| (0..nk).map(|k| c(self.direct(j, q, k))).collect()).collect())
            .collect();
        let g: Vec<Vec<Vec<Vec<Value>>>> = (0..nq)
            .map(|j| {
                (0..nq)
                    .map(|q| {
                        (0..nk)
                            .map(|k| (0..nm).map(|m| c(self.ris_to_ue(j, q, k, m))).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let h: Vec<Vec<Vec<Value>>> = (0..nq)
            .map(|q| (0..nk).map(|k| (0..nm).map(|m| c(self.bs_to_ris(q, k, m))).collect()).collect())
            .collect();
        json!({
            "Q": nq,
            "K": nk,
            "M": nm,
            "h_direct": direct,
            "g_ris": g,
            "h_bs_ris": h,
        })
    }
}
