//! Offline round-optimal horizon analysis over recorded action trajectories.

use super::WorkloadError;

/// Cosine similarity of two action vectors. Two zero vectors are identical
/// (1); a zero vector against a non-zero one is dissimilar (0).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => dot / (na * nb),
    }
}

/// Longest prefix over which every candidate action stays within
/// `sim_threshold` cosine similarity of the reference action.
pub fn round_optimal_horizon(
    reference: &[Vec<f64>],
    candidate: &[Vec<f64>],
    sim_threshold: f64,
) -> Result<u32, WorkloadError> {
    if !(sim_threshold > 0.0 && sim_threshold <= 1.0) {
        return Err(WorkloadError::InvalidSpec(format!(
            "similarity threshold {sim_threshold} outside (0, 1]"
        )));
    }
    let mut len = 0u32;
    for (i, (r, c)) in reference.iter().zip(candidate).enumerate() {
        if r.len() != c.len() {
            return Err(WorkloadError::InvalidSpec(format!(
                "action {i}: reference has dimension {}, candidate {}",
                r.len(),
                c.len()
            )));
        }
        if cosine_similarity(r, c) < sim_threshold {
            break;
        }
        len += 1;
    }
    Ok(len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![1.0 + i as f64, 0.5, -0.25 * i as f64]).collect()
    }

    #[test]
    fn identical_is_full_length() {
        let t = traj(20);
        assert_eq!(round_optimal_horizon(&t, &t, 0.9).unwrap(), 20);
    }

    #[test]
    fn orthogonal_tail_cuts_prefix() {
        let reference: Vec<Vec<f64>> = (0..20).map(|_| vec![1.0, 0.0]).collect();
        let mut candidate = reference.clone();
        for a in candidate.iter_mut().skip(12) {
            *a = vec![0.0, 3.0];
        }
        assert_eq!(round_optimal_horizon(&reference, &candidate, 0.9).unwrap(), 12);
    }

    #[test]
    fn zero_vectors() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn bad_inputs() {
        let t = traj(3);
        assert!(round_optimal_horizon(&t, &t, 0.0).is_err());
        assert!(round_optimal_horizon(&t, &t, 1.5).is_err());
        assert!(round_optimal_horizon(&[vec![1.0]], &[vec![1.0, 2.0]], 0.9).is_err());
    }
}
