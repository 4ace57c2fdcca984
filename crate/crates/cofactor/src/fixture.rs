//! Synthetic stand-in for a monthly asset panel: 45 responses and 13 named
//! covariates over 408 months, four of the covariates reported quarterly.

use cofactor_core::population::{generate_synthetic, sample_observations, PopulationModel};

use crate::error::Result;
use crate::panel::{CovariatePanel, Frequency, YearMonth};

pub const RESPONSES: usize = 45;
pub const MONTHS: usize = 408;

pub const COVARIATES: [&str; 13] = [
    "consumer_price_index",
    "producer_price_index",
    "eur_usd",
    "federal_debt",
    "federal_reserve_rate",
    "gdp_growth",
    "government_spending",
    "home_ownership",
    "industrial_production",
    "inflation_rate",
    "mortgage_rate",
    "oil_import",
    "saving_rate",
];

pub const QUARTERLY: [&str; 4] = ["federal_debt", "gdp_growth", "government_spending", "home_ownership"];

/// Generating model: two covariate directions and eight unobserved factors.
pub fn fixture_population(seed: u64) -> Result<PopulationModel> {
    Ok(generate_synthetic(RESPONSES, COVARIATES.len(), 2, 8, 10.0, seed)?)
}

pub fn response_names() -> Vec<String> {
    (1..=RESPONSES).map(|i| format!("asset_{i:02}")).collect()
}

/// Draws `MONTHS` monthly rows from the fixture model starting April 1982.
/// Quarterly covariates keep only their quarter mean, placed on the last
/// month of each quarter.
pub fn financial_fixture(seed: u64) -> Result<CovariatePanel> {
    let pop = fixture_population(seed)?;
    let data = sample_observations(&pop, MONTHS, seed.wrapping_add(1))?;
    let start = YearMonth::new(1982, 4)?;
    let periods: Vec<YearMonth> = std::iter::successors(Some(start), |t| Some(t.next())).take(MONTHS).collect();
    let mut names = response_names();
    names.extend(COVARIATES.iter().map(|s| s.to_string()));
    let mut frequency = Vec::with_capacity(names.len());
    let mut columns = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let col = data.rows.column(j);
        if QUARTERLY.contains(&name.as_str()) {
            frequency.push(Frequency::Quarterly);
            columns.push(
                (0..MONTHS)
                    .map(|t| (t % 3 == 2).then(|| (col[t - 2] + col[t - 1] + col[t]) / 3.0))
                    .collect(),
            );
        } else {
            frequency.push(Frequency::Monthly);
            columns.push(col.iter().map(|&v| Some(v)).collect());
        }
    }
    CovariatePanel::new(periods, names, frequency, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::quarterly_average;

    #[test]
    fn fixture_has_the_documented_shape() {
        let panel = financial_fixture(0).unwrap();
        assert_eq!(panel.len(), MONTHS);
        assert_eq!(panel.names.len(), RESPONSES + 13);
        assert_eq!(panel.frequency.iter().filter(|f| **f == Frequency::Quarterly).count(), 4);
        let q = quarterly_average(&panel).unwrap();
        assert_eq!(q.n(), 136);
    }
}
