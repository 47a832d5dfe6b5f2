use super::{ContingencyTable, StatsError};

/// Cumulative `ln k!` for `k = 0..=max`.
///
/// Built once per analysis (sized to the universe) and shared by every test in
/// that analysis, so each probability costs a handful of additions.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(max: u64) -> Self {
        let mut table = Vec::with_capacity(max as usize + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    pub fn max(&self) -> u64 {
        (self.table.len() - 1) as u64
    }

    fn ln_factorial(&self, k: u64) -> f64 {
        self.table[k as usize]
    }

    fn ln_choose(&self, n: u64, k: u64) -> f64 {
        self.ln_factorial(n) - self.ln_factorial(k) - self.ln_factorial(n - k)
    }

    /// `P(X = k)` for `X ~ Hypergeometric(population, successes, draws)`.
    pub fn pmf(
        &self,
        k: u64,
        population: u64,
        successes: u64,
        draws: u64,
    ) -> Result<f64, StatsError> {
        check_domain(k, population, successes, draws)?;
        if population > self.max() {
            return Err(StatsError::TableTooSmall {
                needed: population,
                available: self.max(),
            });
        }
        Ok(self.pmf_unchecked(k, population, successes, draws))
    }

    fn pmf_unchecked(&self, k: u64, population: u64, successes: u64, draws: u64) -> f64 {
        let ln = self.ln_choose(successes, k) + self.ln_choose(population - successes, draws - k)
            - self.ln_choose(population, draws);
        ln.exp()
    }

    /// `P(X ≥ k)`, summed term by term from `k` up to `min(draws, successes)`.
    pub fn upper_tail(
        &self,
        k: u64,
        population: u64,
        successes: u64,
        draws: u64,
    ) -> Result<f64, StatsError> {
        check_domain(k, population, successes, draws)?;
        if population > self.max() {
            return Err(StatsError::TableTooSmall {
                needed: population,
                available: self.max(),
            });
        }
        let lo = (draws + successes).saturating_sub(population);
        if k <= lo {
            return Ok(1.0);
        }
        let hi = draws.min(successes);
        let tail: f64 = (k..=hi)
            .map(|j| self.pmf_unchecked(j, population, successes, draws))
            .sum();
        Ok(tail.min(1.0))
    }

    /// One-sided (greater) Fisher exact test on a 2×2 table.
    pub fn fisher_greater(&self, table: &ContingencyTable) -> Result<f64, StatsError> {
        self.upper_tail(table.a, table.total(), table.a + table.c, table.a + table.b)
    }
}

fn check_domain(k: u64, population: u64, successes: u64, draws: u64) -> Result<(), StatsError> {
    let ok = successes <= population
        && draws <= population
        && k <= draws.min(successes)
        && k >= (draws + successes).saturating_sub(population);
    if ok {
        Ok(())
    } else {
        Err(StatsError::Domain(format!(
            "hypergeometric k={k}, N={population}, K={successes}, n={draws}"
        )))
    }
}

/// `C(K,k)·C(N−K,n−k)/C(N,n)`, evaluated in log space.
pub fn hypergeometric_pmf(
    k: u64,
    population: u64,
    successes: u64,
    draws: u64,
) -> Result<f64, StatsError> {
    check_domain(k, population, successes, draws)?;
    LogFactorials::new(population).pmf(k, population, successes, draws)
}

/// Probability of at least `a` annotated genes among the selected ones with
/// all margins fixed.
pub fn fisher_exact_greater(table: &ContingencyTable) -> Result<f64, StatsError> {
    LogFactorials::new(table.total()).fisher_greater(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn pmf_examples() {
        // C(4,1)·C(6,2)/C(10,3) = 4·15/120
        let expected = choose(4, 1) * choose(6, 2) / choose(10, 3);
        assert!((expected - 0.5).abs() < 1e-15);
        assert!((hypergeometric_pmf(1, 10, 4, 3).unwrap() - 0.5).abs() < 1e-13);
        assert!((hypergeometric_pmf(0, 5, 0, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            hypergeometric_pmf(4, 10, 4, 3),
            Err(StatsError::Domain(_))
        ));
        assert!(hypergeometric_pmf(0, 10, 11, 3).is_err());
        // k below the lower support bound
        assert!(hypergeometric_pmf(0, 4, 3, 3).is_err());
    }

    #[test]
    fn fisher_examples() {
        let t = ContingencyTable::new(2, 0, 0, 2);
        assert!((fisher_exact_greater(&t).unwrap() - 1.0 / 6.0).abs() < 1e-13);
        let t = ContingencyTable::new(0, 7, 3, 11);
        assert_eq!(fisher_exact_greater(&t).unwrap(), 1.0);
        // a = n = K with N ≫ n: the tail has exactly one term
        let t = ContingencyTable::new(5, 0, 0, 995);
        let point = hypergeometric_pmf(5, 1000, 5, 5).unwrap();
        assert!((fisher_exact_greater(&t).unwrap() - point).abs() <= 1e-12 * point);
    }

    #[test]
    fn table_too_small() {
        let table = LogFactorials::new(5);
        assert!(matches!(
            table.pmf(1, 10, 4, 3),
            Err(StatsError::TableTooSmall { .. })
        ));
    }
}
