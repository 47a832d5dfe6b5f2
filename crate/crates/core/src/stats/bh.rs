use super::StatsError;

/// Benjamini–Hochberg step-up adjustment.
///
/// Sorts ascending (stable, so ties keep input order), takes
/// `min_{j≥i} p_(j)·m/j` from the top rank down, caps at 1 and maps the
/// adjusted values back to input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::Domain(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));

    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank0, &idx) in order.iter().enumerate().rev() {
        // m/j ≥ 1 is rounded first, so the product never drops below p
        let scaled = p_values[idx] * (m as f64 / (rank0 + 1) as f64);
        running = running.min(scaled);
        adjusted[idx] = running.min(1.0);
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_up_example() {
        let adj = bh_adjust(&[0.005, 0.01, 0.03, 0.04]).unwrap();
        let expected = [0.02, 0.02, 0.04, 0.04];
        for (a, e) in adj.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "{adj:?}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(bh_adjust(&[0.3]).unwrap(), [0.3]);
        assert!(bh_adjust(&[]).unwrap().is_empty());
        assert!(bh_adjust(&[1.5]).is_err());
        assert!(bh_adjust(&[f64::NAN]).is_err());
        assert_eq!(bh_adjust(&[0.9, 0.8]).unwrap(), [0.9, 0.9]);
    }

    #[test]
    fn ties_share_a_value() {
        let adj = bh_adjust(&[0.02, 0.01, 0.02, 0.02]).unwrap();
        assert_eq!(adj[0], adj[2]);
        assert_eq!(adj[2], adj[3]);
    }

    fn pvec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![0.0..=1.0f64, Just(0.05), Just(1.0)], 0..60)
    }

    proptest! {
        #[test]
        fn never_decreases_and_monotone(p in pvec()) {
            let adj = bh_adjust(&p).unwrap();
            for i in 0..p.len() {
                prop_assert!(adj[i] >= p[i]);
                prop_assert!(adj[i] <= 1.0);
                for j in 0..p.len() {
                    if p[i] < p[j] {
                        prop_assert!(adj[i] <= adj[j]);
                    }
                }
            }
        }

        #[test]
        fn order_equivariant(p in pvec(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..p.len()).collect();
            perm.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
            let permuted: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let adj = bh_adjust(&p).unwrap();
            let adj_perm = bh_adjust(&permuted).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(adj_perm[k], adj[i]);
            }
        }
    }
}
