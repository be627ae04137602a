//! Comparison-task augmentation: synthetic location facts, paragraph
//! renderings, and balanced same-country questions over location pairs.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::{fill_prompt, strip_numbering, GenerationBackend, ATOMIC_FACT_PROMPT, DETAILED_FACT_PROMPT};
use super::lexicon::{self, ADJECTIVES, FAMOUS_ADJECTIVE, FILLER_FEATURES, FILLER_ORIGINS, GENERIC_SITES};
use super::{derive_seed, PipelineOutput};
use crate::corpus::{corpus_phi, triplet_line, Kind, QAItem, Task, Triplet};
use crate::error::{Error, Result};

pub const COUNTRY_RELATION: &str = "country";

pub const DEFAULT_COUNTRIES: [&str; 5] = ["India", "France", "United States", "Canada", "Russia"];

/// Items per batch sent to the external backend.
const EXTERNAL_BATCH: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
struct LocationInfo {
    label: String,
    city: String,
    site: String,
    kind: String,
    famous: bool,
}

fn location_candidates(country: &str) -> Vec<LocationInfo> {
    let mut out = Vec::new();
    let cities: Vec<String> = match lexicon::lookup(country) {
        Some(lex) => {
            for l in lex.landmarks {
                out.push(LocationInfo {
                    label: format!("{} {}", l.city, l.site),
                    city: l.city.into(),
                    site: l.site.into(),
                    kind: l.kind.into(),
                    famous: true,
                });
            }
            lex.cities.iter().map(|c| c.to_string()).collect()
        }
        None => lexicon::synthetic_cities(country),
    };
    for city in &cities {
        for (site, kind) in GENERIC_SITES {
            out.push(LocationInfo {
                label: format!("{city} {site}"),
                city: city.clone(),
                site: (*site).into(),
                kind: (*kind).into(),
                famous: false,
            });
        }
    }
    out
}

/// Finds lexicon metadata for a label, ignoring a trailing index suffix.
fn describe(label: &str, country: &str) -> Option<LocationInfo> {
    let base = match label.rsplit_once(' ') {
        Some((b, s)) if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit()) => b,
        _ => label,
    };
    location_candidates(country)
        .into_iter()
        .find(|c| c.label == base)
        .map(|mut c| {
            c.label = label.to_owned();
            c
        })
}

fn location_item(id: String, label: String, country: &str) -> QAItem {
    QAItem::atomic(
        id,
        Task::Comparison,
        [label, COUNTRY_RELATION.into(), country.into()],
        true,
    )
}

fn location_fact(item: &QAItem) -> Result<(&str, &str)> {
    match item.fact() {
        Some(f) => Ok((f[0].as_str(), f[2].as_str())),
        None => Err(Error::InvalidParameter(format!(
            "item {} is not an atomic location fact",
            item.id
        ))),
    }
}

/// Per-country quotas: `count / k`, with the remainder going to the first countries.
fn quotas(count: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| count / k + usize::from(i < count % k)).collect()
}

/// Generates `count` new location facts, balanced across `countries` and
/// never reusing a label from `seed_examples`. Ids are `{id_prefix}{index}`.
pub fn generate_locations(
    seed_examples: &[QAItem],
    count: usize,
    countries: &[String],
    backend: &GenerationBackend,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<QAItem>> {
    if count == 0 {
        return Err(Error::InvalidParameter("location count must be at least 1".into()));
    }
    if countries.is_empty() {
        return Err(Error::InvalidParameter("country list is empty".into()));
    }
    let mut taken: HashSet<String> = seed_examples
        .iter()
        .filter_map(QAItem::fact)
        .map(|f| f[0].clone())
        .collect();
    let quota = quotas(count, countries.len());
    let mut per_country: Vec<Vec<String>> = vec![Vec::new(); countries.len()];

    if backend.external.is_some() {
        let examples: String = seed_examples
            .iter()
            .filter_map(QAItem::fact)
            .enumerate()
            .map(|(i, f)| format!("{}. {}\n", i + 1, triplet_line(f)))
            .collect();
        let user = format!(
            "Examples:\n{examples}\nGenerate {count} locations, one per line, as `<location> -- country -- <country>`."
        );
        if let Some(reply) = backend.complete(&fill_prompt(ATOMIC_FACT_PROMPT, &countries.join(", ")), &user) {
            for line in reply.lines() {
                let Some((label, country)) = parse_location_line(line) else {
                    continue;
                };
                let Some(ci) = countries.iter().position(|c| *c == country) else {
                    continue;
                };
                if per_country[ci].len() < quota[ci] && taken.insert(label.clone()) {
                    per_country[ci].push(label);
                }
            }
        }
    }

    for (ci, country) in countries.iter().enumerate() {
        if per_country[ci].len() >= quota[ci] {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ci as u64));
        let candidates = location_candidates(country);
        let (famous, mut generic): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| c.famous);
        generic.shuffle(&mut rng);
        let order: Vec<String> = famous.into_iter().chain(generic).map(|c| c.label).collect();
        let mut round = 1usize;
        'fill: loop {
            for base in &order {
                if per_country[ci].len() >= quota[ci] {
                    break 'fill;
                }
                let label = if round == 1 {
                    base.clone()
                } else {
                    format!("{base} {round}")
                };
                if taken.insert(label.clone()) {
                    per_country[ci].push(label);
                }
            }
            round += 1;
        }
    }

    // Round-robin across countries so the output interleaves them.
    let mut out = Vec::with_capacity(count);
    let mut cursors = vec![0usize; countries.len()];
    while out.len() < count {
        for (ci, country) in countries.iter().enumerate() {
            if let Some(label) = per_country[ci].get(cursors[ci]) {
                cursors[ci] += 1;
                let id = format!("{id_prefix}{:05}", out.len() + 1);
                out.push(location_item(id, label.clone(), country));
            }
        }
    }
    Ok(out)
}

fn parse_location_line(line: &str) -> Option<(String, String)> {
    let body = strip_numbering(line);
    let (label, country) = body.split_once(" -- country -- ").or_else(|| body.rsplit_once(','))?;
    let (label, country) = (label.trim(), country.trim());
    if label.is_empty() || country.is_empty() || label.contains(['\t', '\n']) {
        return None;
    }
    Some((label.to_owned(), country.to_owned()))
}

fn template_paragraph(backend: &GenerationBackend, label: &str, country: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler1 = FILLER_ORIGINS[rng.gen_range(0..FILLER_ORIGINS.len())];
    let filler2 = FILLER_FEATURES[rng.gen_range(0..FILLER_FEATURES.len())];
    let generic_adj = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
    let bank = &backend.templates;
    let (skeleton, info) = match describe(label, country) {
        Some(info) => (&bank.location_paragraph, info),
        None => (
            &bank.fallback_paragraph,
            LocationInfo {
                label: label.into(),
                city: String::new(),
                site: label.into(),
                kind: "place".into(),
                famous: false,
            },
        ),
    };
    let adjective = if info.famous { FAMOUS_ADJECTIVE } else { generic_adj };
    skeleton
        .replace("{label}", label)
        .replace("{site}", &info.site)
        .replace("{adjective}", adjective)
        .replace("{kind}", &info.kind)
        .replace("{city}", &info.city)
        .replace("{country}", country)
        .replace("{filler1}", filler1)
        .replace("{filler2}", filler2)
}

/// Replaces each item's statement with a paragraph rendering. Count and
/// order are preserved.
pub fn detalize_locations(
    atomic: &[QAItem],
    detailed_examples: &[QAItem],
    backend: &GenerationBackend,
    seed: u64,
) -> Result<Vec<QAItem>> {
    if atomic.is_empty() {
        return Err(Error::InvalidParameter("no atomic facts to detalize".into()));
    }
    let facts: Vec<(&str, &str)> = atomic.iter().map(location_fact).collect::<Result<_>>()?;
    let mut external: HashMap<usize, String> = HashMap::new();
    if backend.external.is_some() {
        let examples: String = detailed_examples
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}. {}\n", i + 1, e.question))
            .collect();
        let system = fill_prompt(DETAILED_FACT_PROMPT, &examples);
        for (b, chunk) in facts.chunks(EXTERNAL_BATCH).enumerate() {
            let user: String = chunk
                .iter()
                .enumerate()
                .map(|(i, (l, c))| format!("{}. {l} -- {COUNTRY_RELATION} -- {c}\n", i + 1))
                .collect();
            let Some(reply) = backend.complete(&system, &user) else {
                break;
            };
            for line in reply.lines() {
                let t = line.trim();
                let digits = t.chars().take_while(char::is_ascii_digit).count();
                let Ok(k) = t[..digits].parse::<usize>() else {
                    continue;
                };
                let text = strip_numbering(t);
                if (1..=chunk.len()).contains(&k) && !text.is_empty() {
                    external.insert(b * EXTERNAL_BATCH + k - 1, text.to_owned());
                }
            }
        }
    }
    Ok(atomic
        .iter()
        .zip(&facts)
        .enumerate()
        .map(|(i, (item, (label, country)))| {
            let paragraph = external
                .remove(&i)
                .unwrap_or_else(|| template_paragraph(backend, label, country, derive_seed(seed, i as u64)));
            QAItem {
                question: paragraph,
                detailed: true,
                ..item.clone()
            }
        })
        .collect())
}

pub fn comparison_question(template: &str, a: &str, b: &str) -> String {
    template.replace("{a}", a).replace("{b}", b)
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Samples `target_count` distinct unordered location pairs with a
/// `yes_fraction` share of same-country pairs.
pub fn generate_inferred_comparison(
    atomic: &[QAItem],
    target_count: usize,
    yes_fraction: Ratio<u64>,
    seed: u64,
) -> Result<Vec<QAItem>> {
    generate_inferred_comparison_excluding(
        atomic,
        target_count,
        yes_fraction,
        seed,
        &HashSet::new(),
        &GenerationBackend::template(),
        "inferred-",
    )
}

/// As [`generate_inferred_comparison`], skipping label pairs in `exclude`
/// (stored lexicographically ordered).
pub fn generate_inferred_comparison_excluding(
    atomic: &[QAItem],
    target_count: usize,
    yes_fraction: Ratio<u64>,
    seed: u64,
    exclude: &HashSet<(String, String)>,
    backend: &GenerationBackend,
    id_prefix: &str,
) -> Result<Vec<QAItem>> {
    if *yes_fraction.numer() == 0 || yes_fraction >= Ratio::from_integer(1) {
        return Err(Error::InvalidParameter(format!(
            "yes fraction must lie strictly between 0 and 1, got {yes_fraction}"
        )));
    }
    let mut seen = HashSet::new();
    let mut locs: Vec<(&str, &str)> = Vec::new();
    for item in atomic {
        let (label, country) = location_fact(item)?;
        if seen.insert(label) {
            locs.push((label, country));
        }
    }
    if locs.len() < 2 {
        return Err(Error::InvalidParameter(
            "at least two distinct locations are needed".into(),
        ));
    }
    let (num, den) = (*yes_fraction.numer() as u128, *yes_fraction.denom() as u128);
    let yes_target = ((target_count as u128 * num * 2 + den) / (2 * den)) as usize;
    let no_target = target_count - yes_target;

    let mut yes_pairs = Vec::new();
    let mut no_pairs = Vec::new();
    for i in 0..locs.len() {
        for j in i + 1..locs.len() {
            if !exclude.is_empty() && exclude.contains(&unordered(locs[i].0, locs[j].0)) {
                continue;
            }
            let pair = (i as u32, j as u32);
            if locs[i].1 == locs[j].1 {
                yes_pairs.push(pair);
            } else {
                no_pairs.push(pair);
            }
        }
    }
    let available = yes_pairs.len() + no_pairs.len();
    if target_count > available {
        return Err(Error::Shortfall {
            what: "distinct location pairs".into(),
            requested: target_count,
            available,
        });
    }
    if yes_target > yes_pairs.len() {
        return Err(Error::Shortfall {
            what: "same-country location pairs".into(),
            requested: yes_target,
            available: yes_pairs.len(),
        });
    }
    if no_target > no_pairs.len() {
        return Err(Error::Shortfall {
            what: "cross-country location pairs".into(),
            requested: no_target,
            available: no_pairs.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(u32, u32)> = rand::seq::index::sample(&mut rng, yes_pairs.len(), yes_target)
        .into_iter()
        .map(|k| yes_pairs[k])
        .collect();
    chosen.extend(
        rand::seq::index::sample(&mut rng, no_pairs.len(), no_target)
            .into_iter()
            .map(|k| no_pairs[k]),
    );
    chosen.shuffle(&mut rng);

    let templates = &backend.templates.comparison_questions;
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            let (a, ca) = locs[i as usize];
            let (b, cb) = locs[j as usize];
            let same = ca == cb;
            let template = &templates[rng.gen_range(0..templates.len())];
            let fa: Triplet = [a.into(), COUNTRY_RELATION.into(), ca.into()];
            let fb: Triplet = [b.into(), COUNTRY_RELATION.into(), cb.into()];
            QAItem {
                id: format!("{id_prefix}{:05}", k + 1),
                kind: Kind::Inferred,
                task: Task::Comparison,
                hops: 2,
                question: comparison_question(template, a, b),
                answer: if same { "Yes" } else { "No" }.into(),
                path: same.then(|| {
                    vec![
                        a.into(),
                        COUNTRY_RELATION.into(),
                        ca.into(),
                        COUNTRY_RELATION.into(),
                        b.into(),
                    ]
                }),
                source_facts: vec![fa, fb],
                synthetic: true,
                detailed: false,
                split: None,
            }
        })
        .collect())
}

/// Built-in stand-in for the original location corpus: 24 facts per default
/// country and 60 balanced comparison questions over them.
pub fn seed_comparison_corpus() -> (Vec<QAItem>, Vec<QAItem>) {
    const SEED: u64 = 0x5eed_10c5;
    let mut atomic = Vec::new();
    for (ci, country) in DEFAULT_COUNTRIES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, ci as u64));
        let mut generic: Vec<LocationInfo> = location_candidates(country).into_iter().filter(|c| !c.famous).collect();
        generic.shuffle(&mut rng);
        for info in generic.into_iter().take(24) {
            let id = format!("seed-atomic-{:05}", atomic.len() + 1);
            let mut item = location_item(id, info.label, country);
            item.synthetic = false;
            atomic.push(item);
        }
    }
    let mut inferred = generate_inferred_comparison_excluding(
        &atomic,
        60,
        Ratio::new(1, 2),
        SEED,
        &HashSet::new(),
        &GenerationBackend::template(),
        "seed-inferred-",
    )
    .expect("seed corpus has enough pairs");
    for item in &mut inferred {
        item.synthetic = false;
    }
    (atomic, inferred)
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub atomic_target: usize,
    pub inferred_target: usize,
    pub countries: Vec<String>,
    pub yes_fraction: Ratio<u64>,
    pub detailed: bool,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            atomic_target: 1000,
            inferred_target: 8000,
            countries: DEFAULT_COUNTRIES.iter().map(|c| c.to_string()).collect(),
            yes_fraction: Ratio::new(1, 2),
            detailed: true,
            seed: 0,
        }
    }
}

/// Grows the seed corpus to the configured sizes.
pub fn run_comparison(
    config: &ComparisonConfig,
    seed_atomic: Vec<QAItem>,
    seed_inferred: Vec<QAItem>,
    backend: &GenerationBackend,
) -> Result<PipelineOutput> {
    if config.atomic_target < seed_atomic.len() || config.inferred_target < seed_inferred.len() {
        return Err(Error::InvalidParameter(format!(
            "targets ({} atomic, {} inferred) are below the seed corpus size ({}, {})",
            config.atomic_target,
            config.inferred_target,
            seed_atomic.len(),
            seed_inferred.len()
        )));
    }
    let mut atomic = seed_atomic;
    let new_count = config.atomic_target - atomic.len();
    if new_count > 0 {
        let generated = generate_locations(
            &atomic,
            new_count,
            &config.countries,
            backend,
            derive_seed(config.seed, 1),
            "atomic-",
        )?;
        atomic.extend(generated);
    }
    if config.detailed {
        // Template renderings of the first facts double as style examples.
        let head = &atomic[..atomic.len().min(3)];
        let examples = detalize_locations(head, &[], &GenerationBackend::template(), config.seed)?;
        atomic = detalize_locations(&atomic, &examples, backend, derive_seed(config.seed, 2))?;
    }
    let exclude: HashSet<(String, String)> = seed_inferred
        .iter()
        .filter(|i| i.source_facts.len() == 2)
        .map(|i| unordered(&i.source_facts[0][0], &i.source_facts[1][0]))
        .collect();
    let mut inferred = seed_inferred;
    let new_inferred = config.inferred_target - inferred.len();
    if new_inferred > 0 {
        inferred.extend(generate_inferred_comparison_excluding(
            &atomic,
            new_inferred,
            config.yes_fraction,
            derive_seed(config.seed, 3),
            &exclude,
            backend,
            "inferred-",
        )?);
    }
    let report = corpus_phi(&atomic, &inferred);
    Ok(PipelineOutput {
        atomic,
        inferred,
        report,
        warnings: backend.take_warnings(),
        graph: None,
    })
}
