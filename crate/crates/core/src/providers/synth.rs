use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Deterministic unit vector for a label, used in place of a real text/image encoder.
///
/// The label hash seeds a ChaCha8 stream of standard normals, which is then
/// L2-normalised; the result is identical across runs and platforms.
pub fn synth_embedding(label: &str, dim: usize) -> Vec<f32> {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(label.as_bytes()));
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn stable_and_unit() {
        let a = synth_embedding("teacup", 512);
        assert_eq!(a, synth_embedding("teacup", 512));
        let n: f64 = cos(&a, &a).sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fixture_labels_nearly_orthogonal() {
        let labels = crate::eval::FIXTURE_LABELS;
        let vs: Vec<Vec<f32>> = labels.iter().map(|l| synth_embedding(l, 512)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                worst = worst.max(cos(&vs[i], &vs[j]).abs());
            }
        }
        assert!(worst < 0.2, "max |cos| = {worst}");
    }

    #[test]
    fn injective_on_thousand_labels() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..1000 {
            let v = synth_embedding(&format!("object-{i}"), 8);
            let key: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision at {i}");
        }
    }
}
