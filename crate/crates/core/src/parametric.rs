//! Parametric panels: ordered-logit respondents with a per-survey quality.
//!
//! Respondent `j` of survey `s` has latent `q_s + e_j` with standard logistic
//! `e_j`; the rating is one plus the number of cutpoints below the latent.
//! Used as a known-truth oracle for the evaluation metrics and as bench input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    Category, ConceptAttributes, Consumer, Corpus, Demographics, LikertRating, Method,
    ResponseRecord, Role, Stimulus, Survey,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricSpec {
    pub surveys: usize,
    pub respondents: usize,
    pub quality_mean: f64,
    pub quality_std: f64,
    pub cutpoints: [f64; 4],
    pub seed: u64,
}

impl Default for ParametricSpec {
    /// 57 surveys of 200 respondents with mean PI near 4.0 and a
    /// survey-to-survey spread near 0.1.
    fn default() -> Self {
        ParametricSpec {
            surveys: 57,
            respondents: 200,
            quality_mean: 1.1,
            quality_std: 0.14,
            cutpoints: [-2.2, -1.2, 0.0, 1.6],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricPanel {
    pub spec: ParametricSpec,
    /// Latent quality per survey.
    pub qualities: Vec<f64>,
}

const GENDERS: [&str; 2] = ["female", "male"];
const REGIONS: [&str; 4] = ["Northeast", "Midwest", "South", "West"];

fn logistic(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

impl ParametricPanel {
    pub fn generate(spec: ParametricSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal =
            Normal::new(spec.quality_mean, spec.quality_std).expect("finite quality spread");
        let qualities = (0..spec.surveys).map(|_| normal.sample(&mut rng)).collect();
        ParametricPanel { spec, qualities }
    }

    pub fn rating(&self, latent: f64) -> LikertRating {
        LikertRating::from_index(self.spec.cutpoints.iter().filter(|c| latent > **c).count())
    }

    /// Expected mean rating of survey `s` under the model.
    pub fn expected_pi(&self, s: usize) -> f64 {
        let q = self.qualities[s];
        let above = |c: f64| 1.0 / (1.0 + (c - q).exp());
        1.0 + self.spec.cutpoints.iter().map(|c| above(*c)).sum::<f64>()
    }

    fn draw(&self, role: Role, offsets: &[f64], stream: u64, provenance: String) -> Corpus {
        let surveys = self
            .qualities
            .iter()
            .zip(offsets)
            .enumerate()
            .map(|(s, (q, offset))| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
                rng.set_stream(stream.wrapping_mul(1 << 20).wrapping_add(s as u64 + 1));
                let mut roster = Vec::with_capacity(self.spec.respondents);
                let mut responses = Vec::with_capacity(self.spec.respondents);
                for j in 0..self.spec.respondents {
                    let id = format!("p{j:04}");
                    roster.push(Consumer {
                        id: id.clone(),
                        demographics: Demographics {
                            age: Some(rng.gen_range(18..80)),
                            gender: Category::from(GENDERS[rng.gen_range(0..GENDERS.len())]),
                            region: Category::from(REGIONS[rng.gen_range(0..REGIONS.len())]),
                            ..Default::default()
                        },
                        role,
                    });
                    let rating = self.rating(q + offset + logistic(&mut rng));
                    responses.push(ResponseRecord::rated(id, Method::Dlr, 0, rating));
                }
                Survey {
                    id: format!("concept-{s:03}"),
                    stimulus: Stimulus::text(format!("Parametric concept number {s}.")),
                    attributes: ConceptAttributes::default(),
                    roster,
                    responses,
                }
            })
            .collect();
        Corpus {
            surveys,
            role,
            provenance,
        }
    }

    /// The "human" panel.
    pub fn real(&self) -> Corpus {
        self.draw(
            Role::Real,
            &vec![0.0; self.qualities.len()],
            0,
            format!("parametric seed={}", self.spec.seed),
        )
    }

    /// An independent panel from the same model. `noise` is the standard
    /// deviation of an extra per-survey shift of the latent; 0 gives a panel
    /// exchangeable with the real one.
    pub fn replicate(&self, noise: f64, stream: u64) -> Corpus {
        assert!(stream > 0, "stream 0 is the real panel");
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0x5eed);
        rng.set_stream(stream);
        let offsets: Vec<f64> = match Normal::new(0.0, noise) {
            Ok(n) if noise > 0.0 => (0..self.qualities.len())
                .map(|_| n.sample(&mut rng))
                .collect(),
            _ => vec![0.0; self.qualities.len()],
        };
        self.draw(
            Role::Synthetic,
            &offsets,
            stream,
            format!(
                "parametric replicate seed={} stream={stream} noise={noise}",
                self.spec.seed
            ),
        )
    }
}

/// The same respondents and answers relabeled as a synthetic panel.
pub fn synthetic_copy(real: &Corpus) -> Corpus {
    let mut out = real.clone();
    out.role = Role::Synthetic;
    for c in out.surveys.iter_mut().flat_map(|s| s.roster.iter_mut()) {
        c.role = Role::Synthetic;
    }
    out.provenance = format!("copy of {}", real.provenance);
    out
}
