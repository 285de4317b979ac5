//! Synthetic embeddings for objects, properties, and object instances.
//!
//! Each object and each property gets one fixed unit direction. An instance
//! embedding mixes its object direction with the directions of the
//! properties it carries plus Gaussian noise, then renormalizes. The same
//! tables double as the linguistic query vectors, so the visual and language
//! sides share their grounding.

use super::{Catalog, WorldError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    dim: usize,
    sigma: f64,
    object_vecs: Vec<Vec<f64>>,
    property_vecs: Vec<Vec<f64>>,
    /// Set when the dimension is too small to hold quasi-orthogonal
    /// directions for every concept; generation still proceeds.
    pub crowded: bool,
}

/// Draw the fixed direction tables. Deterministic given the seed.
pub fn synth_embeddings(
    catalog: &Catalog,
    dim: usize,
    sigma: f64,
    seed: u64,
) -> Result<EmbeddingSpace, WorldError> {
    if dim < 4 {
        return Err(WorldError::EmbeddingDimTooSmall { dim });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cone: f64 = std::env::var("QS_CONE").ok().and_then(|v| v.parse().ok()).unwrap_or(0.0);
    let axis = unit_vector(&mut rng, dim);
    let mut draw = |rng: &mut ChaCha8Rng| {
        let mut v = unit_vector(rng, dim);
        if cone > 0.0 {
            for (x, a) in v.iter_mut().zip(&axis) {
                *x += cone * a;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    };
    let object_vecs = (0..catalog.object_count()).map(|_| draw(&mut rng)).collect();
    let property_vecs = (0..catalog.property_count()).map(|_| draw(&mut rng)).collect();
    let crowded = catalog.object_count() + catalog.property_count() > dim * dim;
    Ok(EmbeddingSpace { dim, sigma, object_vecs, property_vecs, crowded })
}

impl EmbeddingSpace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn object_vec(&self, o: usize) -> &[f64] {
        &self.object_vecs[o]
    }

    pub fn property_vec(&self, p: usize) -> &[f64] {
        &self.property_vecs[p]
    }

    /// Embedding of one object instance bearing a set of properties:
    /// `normalize(e_object + Σ e_property + η)`, `η ~ N(0, σ²I)`.
    /// With σ = 0 no randomness is consumed, so equal inputs give equal
    /// vectors.
    pub fn instance(&self, object: usize, properties: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.object_vecs[object].clone();
        for &p in properties {
            for (a, b) in v.iter_mut().zip(&self.property_vecs[p]) {
                *a += b;
            }
        }
        if self.sigma > 0.0 {
            for a in v.iter_mut() {
                let eta: f64 = rng.sample(StandardNormal);
                *a += self.sigma * eta;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // Complete cancellation: fall back to the bare object direction.
            return self.object_vecs[object].clone();
        }
        for a in v.iter_mut() {
            *a /= norm;
        }
        v
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
