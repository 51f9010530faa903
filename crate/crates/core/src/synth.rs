//! Deterministic synthetic inputs with planted ground truth, for tests,
//! benchmarks and demos.

use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::StudyPoint;

/// Expected counts for [`fixture_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedTruth {
    pub citations: u64,
    pub ingested: u64,
    pub no_abstract: u64,
    pub stage1: u64,
    pub filtered: u64,
    pub complete: u64,
    pub in_range: u64,
    pub cohort_pass: u64,
}

pub struct SynthCorpus {
    pub xml: String,
    pub truth: PlantedTruth,
    /// Added to every female study mean (SBP and DBP) to get the male one.
    pub male_shift: f64,
}

impl SynthCorpus {
    pub fn write_gz(&self, path: &Path) -> std::io::Result<()> {
        let mut enc = GzEncoder::new(std::fs::File::create(path)?, Compression::default());
        enc.write_all(self.xml.as_bytes())?;
        enc.finish()?.sync_all()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn citation(pmid: u64, title: &str, abstract_text: Option<&str>) -> String {
    let abs = abstract_text
        .map(|t| {
            format!(
                "        <Abstract>\n          <AbstractText>{}</AbstractText>\n        </Abstract>\n",
                escape(t)
            )
        })
        .unwrap_or_default();
    format!(
        "  <PubmedArticle>\n    <MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\">\n      <PMID Version=\"1\">{pmid}</PMID>\n      <Article PubModel=\"Print\">\n        <ArticleTitle>{}</ArticleTitle>\n{abs}      </Article>\n    </MedlineCitation>\n  </PubmedArticle>\n",
        escape(title)
    )
}

fn r1(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 10.0).round() / 10.0
}

struct Study {
    n_male: u64,
    n_female: u64,
    male: [f64; 4],
    female: [f64; 4],
}

fn complete_text(s: &Study) -> String {
    format!(
        "Sex differences in blood pressure were examined in a community cohort. \
         We enrolled {} males and {} females. \
         In males, SBP was {} ± {} mmHg and DBP was {} ± {} mmHg. \
         In females, SBP was {} ± {} mmHg and DBP was {} ± {} mmHg. \
         Blood pressure differed by sex.",
        s.n_male,
        s.n_female,
        s.male[0],
        s.male[1],
        s.male[2],
        s.male[3],
        s.female[0],
        s.female[1],
        s.female[2],
        s.female[3]
    )
}

/// 100 abstracts (plus 3 citations without abstracts) whose filter and
/// validation funnel is known: 70 mention blood pressure, 40 also give
/// mmHg, 12 yield all ten variables with the mock backend, 10 of those are
/// in range and 9 have a cohort above 100. Male study means are the female
/// means shifted by +5 mmHg with equal cohort sizes.
pub fn fixture_corpus() -> SynthCorpus {
    let shift = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(20240129);
    let mut xml = String::from(
        "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<!DOCTYPE PubmedArticleSet PUBLIC \"-//NLM//DTD PubMedArticle, 1st January 2024//EN\" \"https://dtd.nlm.nih.gov/ncbi/pubmed/out/pubmed_240101.dtd\">\n<PubmedArticleSet>\n",
    );
    let mut pmid = 30_000_000u64;
    let mut push = |xml: &mut String, title: &str, text: Option<&str>| {
        pmid += 1;
        xml.push_str(&citation(pmid, title, text));
    };

    let mut entries: Vec<(String, Option<String>)> = Vec::new();
    for i in 0..3 {
        entries.push((format!("Editorial comment {i}"), None));
    }
    for i in 0..20 {
        let n = rng.gen_range(8..40);
        entries.push((
            format!("Gene expression study {i}"),
            Some(format!(
                "We profiled {n} cell lines and found altered expression of {} transcripts.",
                n * 3
            )),
        ));
    }
    for i in 0..10 {
        let iop = r1(&mut rng, 12.0, 24.0);
        entries.push((
            format!("Intraocular pressure study {i}"),
            Some(format!(
                "Intraocular pressure was {iop} ± 3.1 mmHg in {} eyes.",
                rng.gen_range(20..90)
            )),
        ));
    }
    for i in 0..30 {
        entries.push((
            format!("Ambulatory monitoring {i}"),
            Some(format!(
                "Ambulatory blood pressure monitoring was performed in {} patients over 24 hours.",
                rng.gen_range(50..500)
            )),
        ));
    }

    // Complete studies: 9 valid, 1 small cohort, 2 out of range.
    let mut studies = Vec::new();
    for k in 0..12 {
        let n = if k == 9 { 45 } else { rng.gen_range(60..400) };
        let female = [
            r1(&mut rng, 108.0, 128.0),
            r1(&mut rng, 8.0, 16.0),
            r1(&mut rng, 66.0, 82.0),
            r1(&mut rng, 6.0, 11.0),
        ];
        let mut male = [
            female[0] + shift,
            female[1] + 1.0,
            female[2] + shift,
            female[3] + 0.5,
        ];
        let mut female = female;
        male.iter_mut()
            .for_each(|v| *v = (*v * 10.0).round() / 10.0);
        if k == 10 {
            female[2] = 25.0;
        }
        if k == 11 {
            male[0] = 210.0;
        }
        studies.push(Study {
            n_male: n,
            n_female: if k == 9 { 50 } else { n },
            male,
            female,
        });
    }
    for (k, s) in studies.iter().enumerate() {
        entries.push((format!("Cohort study {k}"), Some(complete_text(s))));
    }
    for i in 0..28 {
        let text = match i % 3 {
            0 => format!(
                "Blood pressure was recorded in {} men and {} women; mean SBP was {} ± {} mmHg overall.",
                rng.gen_range(40..300),
                rng.gen_range(40..300),
                r1(&mut rng, 110.0, 135.0),
                r1(&mut rng, 9.0, 15.0)
            ),
            1 => format!(
                "We enrolled {} males. In males, SBP was {} ± {} mmHg and DBP was {} ± {} mmHg. Blood pressure was stable.",
                rng.gen_range(40..300),
                r1(&mut rng, 115.0, 135.0),
                r1(&mut rng, 9.0, 15.0),
                r1(&mut rng, 70.0, 85.0),
                r1(&mut rng, 6.0, 10.0)
            ),
            _ => format!(
                "Mean blood pressure was {}/{} mmHg in hypertensive adults.",
                rng.gen_range(135..160),
                rng.gen_range(85..100)
            ),
        };
        entries.push((format!("Incomplete report {i}"), Some(text)));
    }

    // Interleave deterministically so categories are not contiguous.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for &i in &order {
        let (title, text) = &entries[i];
        push(&mut xml, title, text.as_deref());
    }
    xml.push_str("</PubmedArticleSet>\n");

    SynthCorpus {
        xml,
        truth: PlantedTruth {
            citations: 103,
            ingested: 100,
            no_abstract: 3,
            stage1: 70,
            filtered: 40,
            complete: 12,
            in_range: 10,
            cohort_pass: 9,
        },
        male_shift: shift,
    }
}

/// `n_per` unit-weight points from each of two Gaussians with covariance
/// `variance * I`.
pub fn two_clusters(
    seed: u64,
    n_per: usize,
    centers: [[f64; 2]; 2],
    variance: f64,
) -> Vec<StudyPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    let mut out = Vec::with_capacity(2 * n_per);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..n_per {
            out.push(StudyPoint {
                sbp: center[0] + noise.sample(&mut rng),
                dbp: center[1] + noise.sample(&mut rng),
                weight: 1.0,
                pmid: format!("c{c}-{i}"),
            });
        }
    }
    out
}

/// Study points scattered around a center with cohort-size weights.
pub fn study_cloud(seed: u64, n: usize, center: [f64; 2], sd: [f64; 2]) -> Vec<StudyPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sx = Normal::new(center[0], sd[0]).expect("finite sd");
    let sy = Normal::new(center[1], sd[1]).expect("finite sd");
    (0..n)
        .map(|i| StudyPoint {
            sbp: sx.sample(&mut rng),
            dbp: sy.sample(&mut rng),
            weight: rng.gen_range(50..2000) as f64,
            pmid: format!("s{i}"),
        })
        .collect()
}
