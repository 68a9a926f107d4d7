use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-tree bootstrap multiplicities `c_j(t)` and the out-of-bag set
/// `{j : c_j(t) = 0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<u32>", into = "Vec<u32>")]
pub struct BootstrapRecord {
    multiplicity: Vec<u32>,
    oob: Vec<usize>,
}

impl From<Vec<u32>> for BootstrapRecord {
    fn from(multiplicity: Vec<u32>) -> Self {
        let oob = multiplicity
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect();
        BootstrapRecord { multiplicity, oob }
    }
}

impl From<BootstrapRecord> for Vec<u32> {
    fn from(record: BootstrapRecord) -> Self {
        record.multiplicity
    }
}

impl BootstrapRecord {
    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    #[inline]
    pub fn count(&self, j: usize) -> u32 {
        self.multiplicity[j]
    }

    #[inline]
    pub fn is_oob(&self, j: usize) -> bool {
        self.multiplicity[j] == 0
    }

    pub fn oob_indices(&self) -> &[usize] {
        &self.oob
    }

    pub fn len(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicity.is_empty()
    }

    /// `(index, multiplicity)` for every in-bag point, ascending by index.
    pub fn in_bag(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.multiplicity
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(j, &c)| (j, c))
    }
}

/// Draws `n` indices uniformly with replacement from `0..n`.
pub fn bootstrap_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<BootstrapRecord> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("bootstrap needs n >= 2, got {n}")));
    }
    let mut multiplicity = vec![0u32; n];
    for _ in 0..n {
        multiplicity[rng.gen_range(0..n)] += 1;
    }
    Ok(BootstrapRecord::from(multiplicity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conserves_mass_and_oob() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 3, 17, 250] {
            let rec = bootstrap_sample(n, &mut rng).unwrap();
            assert_eq!(rec.multiplicity().iter().map(|&c| c as usize).sum::<usize>(), n);
            let expected: Vec<usize> = (0..n).filter(|&j| rec.count(j) == 0).collect();
            assert_eq!(rec.oob_indices(), expected.as_slice());
        }
        assert!(bootstrap_sample(1, &mut rng).is_err());
    }

    #[test]
    fn oob_fraction_near_inverse_e() {
        // Monte Carlo over 200 draws of size 1000; the limit is 1/e.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1000;
        let draws = 200;
        let total: usize = (0..draws)
            .map(|_| bootstrap_sample(n, &mut rng).unwrap().oob_indices().len())
            .sum();
        let frac = total as f64 / (n * draws) as f64;
        assert!((frac - (-1.0f64).exp()).abs() < 0.02, "oob fraction {frac}");
    }

    #[test]
    fn serde_keeps_only_counts() {
        let rec = BootstrapRecord::from(vec![0, 2, 1, 0]);
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(json, "[0,2,1,0]");
        let back: BootstrapRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.oob_indices(), &[0, 3]);
    }
}
