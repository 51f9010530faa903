use serde::{Deserialize, Serialize};

/// The ten extracted variables, in canonical answer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    NMale,
    NFemale,
    SbpMeanMale,
    SbpSdMale,
    SbpMeanFemale,
    SbpSdFemale,
    DbpMeanMale,
    DbpSdMale,
    DbpMeanFemale,
    DbpSdFemale,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::NMale,
        Field::NFemale,
        Field::SbpMeanMale,
        Field::SbpSdMale,
        Field::SbpMeanFemale,
        Field::SbpSdFemale,
        Field::DbpMeanMale,
        Field::DbpSdMale,
        Field::DbpMeanFemale,
        Field::DbpSdFemale,
    ];

    /// Label used in the line-oriented answer schema.
    pub fn label(self) -> &'static str {
        match self {
            Field::NMale => "Number of males",
            Field::NFemale => "Number of females",
            Field::SbpMeanMale => "Mean SBP males",
            Field::SbpSdMale => "SD SBP males",
            Field::SbpMeanFemale => "Mean SBP females",
            Field::SbpSdFemale => "SD SBP females",
            Field::DbpMeanMale => "Mean DBP males",
            Field::DbpSdMale => "SD DBP males",
            Field::DbpMeanFemale => "Mean DBP females",
            Field::DbpSdFemale => "SD DBP females",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::NMale => "n_male",
            Field::NFemale => "n_female",
            Field::SbpMeanMale => "sbp_mean_male",
            Field::SbpSdMale => "sbp_sd_male",
            Field::SbpMeanFemale => "sbp_mean_female",
            Field::SbpSdFemale => "sbp_sd_female",
            Field::DbpMeanMale => "dbp_mean_male",
            Field::DbpSdMale => "dbp_sd_male",
            Field::DbpMeanFemale => "dbp_mean_female",
            Field::DbpSdFemale => "dbp_sd_female",
        }
    }

    pub fn is_count(self) -> bool {
        matches!(self, Field::NMale | Field::NFemale)
    }

    pub fn is_mean(self) -> bool {
        matches!(
            self,
            Field::SbpMeanMale | Field::SbpMeanFemale | Field::DbpMeanMale | Field::DbpMeanFemale
        )
    }

    pub fn is_sd(self) -> bool {
        !self.is_count() && !self.is_mean()
    }

    pub fn is_systolic(self) -> bool {
        matches!(
            self,
            Field::SbpMeanMale | Field::SbpSdMale | Field::SbpMeanFemale | Field::SbpSdFemale
        )
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sex-stratified blood-pressure statistics extracted from one abstract.
/// BP values are in mmHg; `None` means not available.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BPExtraction {
    pub pmid: String,
    pub n_male: Option<u64>,
    pub n_female: Option<u64>,
    pub sbp_mean_male: Option<f64>,
    pub sbp_sd_male: Option<f64>,
    pub sbp_mean_female: Option<f64>,
    pub sbp_sd_female: Option<f64>,
    pub dbp_mean_male: Option<f64>,
    pub dbp_sd_male: Option<f64>,
    pub dbp_mean_female: Option<f64>,
    pub dbp_sd_female: Option<f64>,
    pub raw_answer: String,
}

impl BPExtraction {
    pub fn empty(pmid: &str) -> Self {
        Self {
            pmid: pmid.to_string(),
            ..Default::default()
        }
    }

    /// Field value as a real, counts included.
    pub fn get(&self, field: Field) -> Option<f64> {
        match field {
            Field::NMale => self.n_male.map(|n| n as f64),
            Field::NFemale => self.n_female.map(|n| n as f64),
            _ => *self.real_slot(field),
        }
    }

    /// Sets a field. Counts are only accepted as non-negative integers and
    /// reals only as finite non-negative values; anything else clears the
    /// field.
    pub fn set(&mut self, field: Field, value: Option<f64>) {
        let value = value.filter(|v| v.is_finite() && *v >= 0.0);
        match field {
            Field::NMale | Field::NFemale => {
                let n = value
                    .filter(|v| v.fract() == 0.0 && *v <= u64::MAX as f64)
                    .map(|v| v as u64);
                if field == Field::NMale {
                    self.n_male = n;
                } else {
                    self.n_female = n;
                }
            }
            _ => *self.real_slot_mut(field) = value,
        }
    }

    fn real_slot(&self, field: Field) -> &Option<f64> {
        match field {
            Field::SbpMeanMale => &self.sbp_mean_male,
            Field::SbpSdMale => &self.sbp_sd_male,
            Field::SbpMeanFemale => &self.sbp_mean_female,
            Field::SbpSdFemale => &self.sbp_sd_female,
            Field::DbpMeanMale => &self.dbp_mean_male,
            Field::DbpSdMale => &self.dbp_sd_male,
            Field::DbpMeanFemale => &self.dbp_mean_female,
            Field::DbpSdFemale => &self.dbp_sd_female,
            Field::NMale | Field::NFemale => unreachable!("count field"),
        }
    }

    fn real_slot_mut(&mut self, field: Field) -> &mut Option<f64> {
        match field {
            Field::SbpMeanMale => &mut self.sbp_mean_male,
            Field::SbpSdMale => &mut self.sbp_sd_male,
            Field::SbpMeanFemale => &mut self.sbp_mean_female,
            Field::SbpSdFemale => &mut self.sbp_sd_female,
            Field::DbpMeanMale => &mut self.dbp_mean_male,
            Field::DbpSdMale => &mut self.dbp_sd_male,
            Field::DbpMeanFemale => &mut self.dbp_mean_female,
            Field::DbpSdFemale => &mut self.dbp_sd_female,
            Field::NMale | Field::NFemale => unreachable!("count field"),
        }
    }

    pub fn present_count(&self) -> usize {
        Field::ALL
            .iter()
            .filter(|f| self.get(**f).is_some())
            .count()
    }

    /// Field-wise equality ignoring pmid and raw answer.
    pub fn same_fields(&self, other: &Self) -> bool {
        Field::ALL.iter().all(|f| self.get(*f) == other.get(*f))
    }
}

/// True iff all ten variables are present.
pub fn is_complete(x: &BPExtraction) -> bool {
    x.present_count() == Field::ALL.len()
}
