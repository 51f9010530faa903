use serde::{Deserialize, Serialize};

use crate::extraction::BPExtraction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const BOTH: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn name(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

/// One study's mean (SBP, DBP) for one sex, weighted by that sex's count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    pub sbp: f64,
    pub dbp: f64,
    pub weight: f64,
    pub pmid: String,
}

/// Per-study glyph: center at the means, radii equal to the SDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEllipse {
    pub center: [f64; 2],
    pub radius_sbp: f64,
    pub radius_dbp: f64,
    pub pmid: String,
}

struct SexView {
    n: Option<u64>,
    sbp: Option<f64>,
    sbp_sd: Option<f64>,
    dbp: Option<f64>,
    dbp_sd: Option<f64>,
}

fn view(x: &BPExtraction, sex: Sex) -> SexView {
    match sex {
        Sex::Male => SexView {
            n: x.n_male,
            sbp: x.sbp_mean_male,
            sbp_sd: x.sbp_sd_male,
            dbp: x.dbp_mean_male,
            dbp_sd: x.dbp_sd_male,
        },
        Sex::Female => SexView {
            n: x.n_female,
            sbp: x.sbp_mean_female,
            sbp_sd: x.sbp_sd_female,
            dbp: x.dbp_mean_female,
            dbp_sd: x.dbp_sd_female,
        },
    }
}

/// Projects validated records onto one sex. Records with a zero (or
/// missing) count for that sex are skipped with a warning.
pub fn to_points<'a>(
    records: impl IntoIterator<Item = &'a BPExtraction>,
    sex: Sex,
) -> Vec<StudyPoint> {
    records
        .into_iter()
        .filter_map(|x| {
            let v = view(x, sex);
            match (v.n, v.sbp, v.dbp) {
                (Some(n), Some(sbp), Some(dbp)) if n > 0 => Some(StudyPoint {
                    sbp,
                    dbp,
                    weight: n as f64,
                    pmid: x.pmid.clone(),
                }),
                _ => {
                    log::warn!("pmid {}: no {} cohort, skipped", x.pmid, sex.name());
                    None
                }
            }
        })
        .collect()
}

pub fn study_ellipses<'a>(
    records: impl IntoIterator<Item = &'a BPExtraction>,
    sex: Sex,
) -> Vec<StudyEllipse> {
    records
        .into_iter()
        .filter_map(|x| {
            let v = view(x, sex);
            Some(StudyEllipse {
                center: [v.sbp?, v.dbp?],
                radius_sbp: v.sbp_sd?,
                radius_dbp: v.dbp_sd?,
                pmid: x.pmid.clone(),
            })
        })
        .collect()
}
