//! Built-in e-waste statistics and growth / share reports.

use serde::Serialize;
use thiserror::Error;

/// Label for the generation series. The source table does not state its
/// geography; the adjacent chart is about India.
pub const GENERATION_SERIES_LABEL: &str = "India (assumed; the source series does not name its geography)";

/// Global 2014 e-waste estimate quoted next to the category table, in million tonnes.
pub const STATED_GLOBAL_2014_MT: f64 = 41.8;
pub const CROSS_CHECK_TOLERANCE_MT: f64 = 0.15;
/// Claimed global annual growth band for the e-waste stream.
pub const CLAIMED_GROWTH_RANGE: (f64, f64) = (0.03, 0.05);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least two records, got {0}")]
    InsufficientData(usize),
    #[error("years {0} and {1} are not consecutive")]
    GapInSeries(i32, i32),
    #[error("no category records")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub year: i32,
    pub amount_mmt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRecord {
    pub category: String,
    pub amount_mt: f64,
}

const GENERATION: [(i32, f64); 5] = [
    (2015, 1.97),
    (2016, 2.22),
    (2017, 2.53),
    (2018, 2.86),
    (2019, 3.23),
];

const CATEGORIES: [(&str, f64); 6] = [
    ("Temperature exchange equipment", 7.0),
    ("Screens & monitors", 6.3),
    ("Lamps", 1.0),
    ("Large equipment", 11.8),
    ("Small equipment", 12.8),
    ("Small IT & telecommunication equipment", 3.0),
];

pub fn builtin_tables() -> (Vec<GenerationRecord>, Vec<CategoryRecord>) {
    let generation = GENERATION
        .iter()
        .map(|&(year, amount_mmt)| GenerationRecord { year, amount_mmt })
        .collect();
    let categories = CATEGORIES
        .iter()
        .map(|&(category, amount_mt)| CategoryRecord {
            category: category.to_string(),
            amount_mt,
        })
        .collect();
    (generation, categories)
}

fn check_series(series: &[GenerationRecord]) -> Result<(), StatsError> {
    if series.len() < 2 {
        return Err(StatsError::InsufficientData(series.len()));
    }
    for pair in series.windows(2) {
        if pair[1].year != pair[0].year + 1 {
            return Err(StatsError::GapInSeries(pair[0].year, pair[1].year));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRate {
    pub year: i32,
    pub rate: f64,
}

/// Year-over-year growth `amount(y) / amount(y - 1) - 1`.
pub fn yoy_growth(series: &[GenerationRecord]) -> Result<Vec<GrowthRate>, StatsError> {
    check_series(series)?;
    Ok(series
        .windows(2)
        .map(|p| GrowthRate {
            year: p[1].year,
            rate: p[1].amount_mmt / p[0].amount_mmt - 1.0,
        })
        .collect())
}

/// Compound annual growth rate between the first and last record.
pub fn cagr(series: &[GenerationRecord]) -> Result<f64, StatsError> {
    check_series(series)?;
    let first = series[0];
    let last = series[series.len() - 1];
    let years = f64::from(last.year - first.year);
    Ok((last.amount_mmt / first.amount_mmt).powf(1.0 / years) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub category: String,
    pub amount_mt: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub total_mt: f64,
    pub shares: Vec<CategoryShare>,
}

pub fn category_report(records: &[CategoryRecord]) -> Result<CategoryReport, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let total: f64 = records.iter().map(|r| r.amount_mt).sum();
    let shares = records
        .iter()
        .map(|r| CategoryShare {
            category: r.category.clone(),
            amount_mt: r.amount_mt,
            share: r.amount_mt / total,
        })
        .collect();
    Ok(CategoryReport {
        total_mt: total,
        shares,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub table_total_mt: f64,
    pub stated_total_mt: f64,
    pub difference_mt: f64,
    pub tolerance_mt: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthComparison {
    pub claimed_min: f64,
    pub claimed_max: f64,
    pub table_min: f64,
    pub table_max: f64,
    pub table_within_claim: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub series_label: String,
    pub generation: Vec<GenerationRecord>,
    pub growth: Vec<GrowthRate>,
    pub cagr: f64,
    pub growth_vs_claim: GrowthComparison,
    pub categories: CategoryReport,
    pub cross_check: CrossCheck,
}

/// Full report over the built-in tables.
pub fn builtin_report() -> StatsReport {
    let (generation, categories) = builtin_tables();
    let growth = yoy_growth(&generation).expect("built-in series is consecutive");
    let cagr = cagr(&generation).expect("built-in series is consecutive");
    let categories = category_report(&categories).expect("built-in categories are non-empty");

    let rates = growth.iter().map(|g| g.rate);
    let table_min = rates.clone().fold(f64::INFINITY, f64::min);
    let table_max = rates.fold(f64::NEG_INFINITY, f64::max);
    let (claimed_min, claimed_max) = CLAIMED_GROWTH_RANGE;

    let difference = categories.total_mt - STATED_GLOBAL_2014_MT;
    StatsReport {
        series_label: GENERATION_SERIES_LABEL.to_string(),
        generation,
        growth,
        cagr,
        growth_vs_claim: GrowthComparison {
            claimed_min,
            claimed_max,
            table_min,
            table_max,
            table_within_claim: table_min >= claimed_min && table_max <= claimed_max,
        },
        cross_check: CrossCheck {
            table_total_mt: categories.total_mt,
            stated_total_mt: STATED_GLOBAL_2014_MT,
            difference_mt: difference,
            tolerance_mt: CROSS_CHECK_TOLERANCE_MT,
            within_tolerance: difference.abs() <= CROSS_CHECK_TOLERANCE_MT,
        },
        categories,
    }
}

impl StatsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("E-waste generation, {}\n", self.series_label));
        out.push_str("year  amount (Mt)  yoy growth\n");
        for (i, g) in self.generation.iter().enumerate() {
            let rate = i
                .checked_sub(1)
                .map(|j| format!("{:>9.2}%", self.growth[j].rate * 100.0))
                .unwrap_or_else(|| format!("{:>10}", "-"));
            out.push_str(&format!("{}  {:>11.2}  {}\n", g.year, g.amount_mmt, rate));
        }
        out.push_str(&format!("CAGR {:.2}%\n", self.cagr * 100.0));
        let c = &self.growth_vs_claim;
        out.push_str(&format!(
            "claimed global growth {:.0}%-{:.0}% vs table {:.2}%-{:.2}%: {}\n",
            c.claimed_min * 100.0,
            c.claimed_max * 100.0,
            c.table_min * 100.0,
            c.table_max * 100.0,
            if c.table_within_claim { "consistent" } else { "outside claimed range" }
        ));
        out.push('\n');
        out.push_str("category                                 amount (Mt)   share\n");
        for s in &self.categories.shares {
            out.push_str(&format!(
                "{:<40} {:>11.1} {:>6.2}%\n",
                s.category,
                s.amount_mt,
                s.share * 100.0
            ));
        }
        let x = &self.cross_check;
        out.push_str(&format!(
            "category total {:.1} Mt vs stated 2014 global total {:.1} Mt: difference {:.1} Mt ({} tolerance {:.2})\n",
            x.table_total_mt,
            x.stated_total_mt,
            x.difference_mt.abs(),
            if x.within_tolerance { "within" } else { "exceeds" },
            x.tolerance_mt
        ));
        out
    }
}
