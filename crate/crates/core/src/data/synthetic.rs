use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classify_overlap, save_jsonl, Example, HeadWord, OverlapPattern, RelationInventory, RELATIONS_FILE};
use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::set_match::GoldTriple;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntityType {
    Person,
    Organization,
    Location,
}

/// A relation the generator knows how to verbalize.
#[derive(Clone, Debug)]
pub struct RelationSchema {
    pub name: &'static str,
    pub subject: EntityType,
    pub object: EntityType,
    /// `subject cue object` phrasings.
    pub cues: &'static [&'static str],
    /// `object cue subject` phrasings.
    pub reverse_cues: &'static [&'static str],
}

use EntityType::{Location as Loc, Organization as Org, Person as Per};

const LIBRARY: &[RelationSchema] = &[
    RelationSchema {
        name: "/people/person/place_of_birth",
        subject: Per,
        object: Loc,
        cues: &["was born in"],
        reverse_cues: &["is the birthplace of"],
    },
    RelationSchema {
        name: "/people/person/place_lived",
        subject: Per,
        object: Loc,
        cues: &["lives in", "resides in"],
        reverse_cues: &["is home to"],
    },
    RelationSchema {
        name: "/people/person/nationality",
        subject: Per,
        object: Loc,
        cues: &["is a citizen of", "holds a passport from"],
        reverse_cues: &[],
    },
    RelationSchema {
        name: "/people/deceased_person/place_of_death",
        subject: Per,
        object: Loc,
        cues: &["died in", "passed away in"],
        reverse_cues: &[],
    },
    RelationSchema {
        name: "/business/person/company",
        subject: Per,
        object: Org,
        cues: &["works for", "is employed by"],
        reverse_cues: &["employs"],
    },
    RelationSchema {
        name: "/business/company/founders",
        subject: Org,
        object: Per,
        cues: &["was founded by", "counts among its founders"],
        reverse_cues: &["is one of the founders of"],
    },
    RelationSchema {
        name: "/business/company/place_founded",
        subject: Org,
        object: Loc,
        cues: &["was established in", "started out in"],
        reverse_cues: &[],
    },
    RelationSchema {
        name: "/location/location/contains",
        subject: Loc,
        object: Loc,
        cues: &["contains", "includes the area of"],
        reverse_cues: &["is located in"],
    },
    RelationSchema {
        name: "/location/country/capital",
        subject: Loc,
        object: Loc,
        cues: &["has its capital in"],
        reverse_cues: &["is the capital of"],
    },
    RelationSchema {
        name: "/people/person/children",
        subject: Per,
        object: Per,
        cues: &["is the parent of"],
        reverse_cues: &["is a child of"],
    },
    RelationSchema {
        name: "/business/company/advisors",
        subject: Org,
        object: Per,
        cues: &["is advised by"],
        reverse_cues: &["advises"],
    },
    RelationSchema {
        name: "/sports/sports_team/location",
        subject: Org,
        object: Loc,
        cues: &["plays home games in"],
        reverse_cues: &["hosts"],
    },
];

const FIRST_NAMES: &[&str] = &[
    "Alice", "Bruno", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hiro", "Ingrid", "Jamal", "Keiko", "Luis", "Maya",
    "Nikolai", "Olivia", "Pedro", "Quinn", "Rosa", "Samir", "Tara", "Umar", "Vera", "Wei", "Ximena", "Yusuf", "Zoe",
    "Anton", "Bianca", "Cyrus", "Dalia", "Emil", "Fatima", "Goran", "Hana", "Ivan", "Julia",
];
const LAST_NAMES: &[&str] = &[
    "Abbott", "Bauer", "Castillo", "Duarte", "Eriksen", "Fischer", "Garcia", "Haddad", "Ito", "Jensen", "Kowalski",
    "Larsen", "Moreau", "Nakamura", "Okafor", "Petrov", "Quesada", "Rossi", "Schmidt", "Tanaka", "Usman", "Varga",
    "Weber", "Xu", "Yilmaz", "Zeller", "Alvarez", "Brennan", "Chen", "Dubois", "Evans", "Ferreira",
];
const INITIALS: &[&str] = &["A.", "B.", "D.", "J.", "K.", "M.", "R.", "T."];
const LOCATIONS: &[&str] = &[
    "Paris",
    "Berlin",
    "Madrid",
    "Lisbon",
    "Vienna",
    "Prague",
    "Oslo",
    "Dublin",
    "Cairo",
    "Nairobi",
    "Lagos",
    "Lima",
    "Quito",
    "Bogota",
    "Toronto",
    "Chicago",
    "Boston",
    "Denver",
    "Seattle",
    "Houston",
    "Osaka",
    "Seoul",
    "Hanoi",
    "Manila",
    "Jakarta",
    "Mumbai",
    "Dhaka",
    "Tehran",
    "Ankara",
    "Athens",
    "France",
    "Germany",
    "Spain",
    "Portugal",
    "Austria",
    "Norway",
    "Ireland",
    "Egypt",
    "Kenya",
    "Nigeria",
    "Peru",
    "Ecuador",
    "Colombia",
    "Canada",
    "Japan",
    "Vietnam",
    "Indonesia",
    "India",
    "Turkey",
    "Greece",
    "New York",
    "Los Angeles",
    "San Francisco",
    "Buenos Aires",
    "Cape Town",
    "Hong Kong",
    "Tel Aviv",
    "Rio de Janeiro",
    "Salt Lake City",
    "United States",
    "South Korea",
    "New Zealand",
    "Costa Rica",
    "Sri Lanka",
    "Saudi Arabia",
    "United Kingdom",
];
const ORG_STEMS: &[&str] = &[
    "Acme",
    "Globex",
    "Initech",
    "Umbrella",
    "Stark",
    "Wayne",
    "Tyrell",
    "Cyberdyne",
    "Soylent",
    "Hooli",
    "Vandelay",
    "Oscorp",
    "Massive",
    "Aperture",
    "Wonka",
    "Gringotts",
    "Monarch",
    "Nakatomi",
    "Pied",
    "Virtucon",
    "Zorg",
    "Gekko",
    "Duff",
    "Bluth",
    "Prestige",
    "Sirius",
    "Axiom",
    "Kellerman",
    "Rekall",
    "Dunder",
];
const ORG_SUFFIXES: &[&str] =
    &["Corp", "Inc", "Group", "Labs", "Holdings", "Partners", "Systems", "Industries", "Foundation", "Media"];
const PREFIXES: &[&str] = &["", "", "", "According to reports ,", "In 2010 ,", "Sources say that", "Last year ,"];
const CONNECTORS: &[&str] = &[";", ", and", ", while", ". Meanwhile ,", ". In addition ,"];

impl RelationSchema {
    /// Every relation the generator can verbalize, in default inventory order.
    pub fn library() -> &'static [RelationSchema] {
        LIBRARY
    }

    pub fn find(name: &str) -> Option<&'static RelationSchema> {
        LIBRARY.iter().find(|r| r.name == name)
    }
}

/// Target share of each overlap pattern; need not sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMix {
    pub normal: f64,
    pub seo: f64,
    pub epo: f64,
}

/// Recipe for a synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub seed: u64,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Relation inventory; a label's id is its position.
    pub relations: Vec<String>,
    pub pattern_mix: PatternMix,
    /// Weights of triple counts 1, 2, ... (at most five entries).
    pub count_mix: Vec<f64>,
    /// Relations whose training occurrences are capped at `rare_train_cap`.
    #[serde(default)]
    pub rare_relations: Vec<String>,
    #[serde(default = "default_rare_cap")]
    pub rare_train_cap: usize,
    #[serde(default)]
    pub head_word: HeadWord,
}

fn default_rare_cap() -> usize {
    8
}

impl Default for CorpusManifest {
    /// 5k sentences, ten relations, Normal/SEO/EPO at 0.60/0.24/0.16.
    fn default() -> Self {
        CorpusManifest {
            seed: 7,
            train: 4000,
            valid: 500,
            test: 500,
            relations: LIBRARY[..10].iter().map(|r| r.name.to_string()).collect(),
            pattern_mix: PatternMix { normal: 0.60, seo: 0.24, epo: 0.16 },
            count_mix: vec![0.50, 0.25, 0.12, 0.08, 0.05],
            rare_relations: Vec::new(),
            rare_train_cap: default_rare_cap(),
            head_word: HeadWord::Last,
        }
    }
}

impl CorpusManifest {
    /// Same as the default but with two relations reduced to a handful of training sentences.
    pub fn rare_relation() -> Self {
        let base = CorpusManifest::default();
        let rare = base.relations[8..10].to_vec();
        CorpusManifest { rare_relations: rare, ..base }
    }

    /// Overlap-heavy mix used for comparing attention variants.
    pub fn overlap_heavy() -> Self {
        CorpusManifest { pattern_mix: PatternMix { normal: 0.2, seo: 0.4, epo: 0.4 }, ..CorpusManifest::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn inventory(&self) -> Result<RelationInventory> {
        RelationInventory::new(self.relations.clone())
    }

    /// Exact per-pattern example counts for a split of `size`, by largest remainder.
    pub fn pattern_counts(&self, size: usize) -> [usize; 3] {
        let w = [self.pattern_mix.normal, self.pattern_mix.seo, self.pattern_mix.epo];
        let total: f64 = w.iter().sum();
        let exact: Vec<f64> = w.iter().map(|x| x / total * size as f64).collect();
        let mut counts = [0usize; 3];
        for i in 0..3 {
            counts[i] = exact[i].floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut left = size - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if w[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        counts
    }

    fn validate(&self) -> Result<Vec<&'static RelationSchema>> {
        let inventory = self.inventory()?;
        let schemas = inventory
            .labels()
            .iter()
            .map(|l| RelationSchema::find(l).ok_or_else(|| Error::Config(format!("no template for relation {l:?}"))))
            .collect::<Result<Vec<_>>>()?;
        for r in &self.rare_relations {
            if inventory.id(r).is_none() {
                return Err(Error::Config(format!("rare relation {r:?} is not in the inventory")));
            }
        }
        if self.train == 0 {
            return Err(Error::Config("train split must be non-empty".into()));
        }
        let mix = [self.pattern_mix.normal, self.pattern_mix.seo, self.pattern_mix.epo];
        if mix.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("pattern_mix must be non-negative with a positive sum".into()));
        }
        if self.count_mix.is_empty()
            || self.count_mix.len() > 5
            || self.count_mix.iter().any(|x| !(x.is_finite() && *x >= 0.0))
            || self.count_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("count_mix needs 1 to 5 non-negative weights with a positive sum".into()));
        }
        let multi = self.count_mix.iter().skip(1).sum::<f64>() > 0.0;
        if (self.pattern_mix.seo > 0.0 || self.pattern_mix.epo > 0.0) && !multi {
            return Err(Error::Config("SEO and EPO need triple counts of at least 2".into()));
        }
        if self.pattern_mix.epo > 0.0 && pair_groups(&schemas, &vec![true; schemas.len()]).is_empty() {
            return Err(Error::Config("EPO needs at least two relations sharing subject and object types".into()));
        }
        Ok(schemas)
    }
}

/// Relation ids grouped by (subject type, object type), keeping groups with two or more.
fn pair_groups(schemas: &[&RelationSchema], allowed: &[bool]) -> Vec<Vec<usize>> {
    let mut groups: Vec<((EntityType, EntityType), Vec<usize>)> = Vec::new();
    for (i, s) in schemas.iter().enumerate() {
        if !allowed[i] {
            continue;
        }
        match groups.iter_mut().find(|(k, _)| *k == (s.subject, s.object)) {
            Some((_, v)) => v.push(i),
            None => groups.push(((s.subject, s.object), vec![i])),
        }
    }
    groups.into_iter().map(|(_, v)| v).filter(|v| v.len() >= 2).collect()
}

/// A generated corpus with its inventory and recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    pub relations: RelationInventory,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

/// One sentence-building block and the relations it verbalizes.
#[derive(Clone, Debug)]
enum Unit {
    /// `S cue O`, or `O rcue S` when reversed.
    Single { rel: usize, reversed: bool },
    /// `S cue1 O1 , cue2 O2 and cue3 O3`: shared subject.
    Hub { rels: Vec<usize> },
    /// `S cue1 X , which cue2 O`: X is object then subject.
    Chain { first: usize, second: usize },
    /// `S cue1 and cue2 O`: same entity pair, several relations.
    Pair { rels: Vec<usize> },
}

struct Sentence {
    tokens: Vec<String>,
    /// Entity spans in marker-offset indices with their surface strings.
    entities: Vec<((usize, usize), String)>,
    triples: Vec<GoldTriple>,
    used: HashSet<String>,
}

impl Sentence {
    fn words(&mut self, s: &str) {
        self.tokens.extend(tokenize(s));
    }

    fn entity<R: Rng>(&mut self, ty: EntityType, rng: &mut R) -> usize {
        let surface = loop {
            let s = sample_entity(ty, rng);
            if self.used.insert(s.clone()) {
                break s;
            }
        };
        let start = self.tokens.len() + 1;
        self.words(&surface);
        self.entities.push(((start, self.tokens.len()), surface));
        self.entities.len() - 1
    }

    fn relate(&mut self, subject: usize, rel: usize, object: usize) {
        let (s, o) = (self.entities[subject].0, self.entities[object].0);
        self.triples.push(GoldTriple { ss: s.0, se: s.1, rel, os: o.0, oe: o.1 });
    }
}

fn sample_entity<R: Rng>(ty: EntityType, rng: &mut R) -> String {
    let pick = |list: &[&str], rng: &mut R| list[rng.gen_range(0..list.len())].to_string();
    match ty {
        Per => {
            let first = pick(FIRST_NAMES, rng);
            let last = pick(LAST_NAMES, rng);
            if rng.gen_bool(0.2) {
                format!("{first} {} {last}", pick(INITIALS, rng))
            } else {
                format!("{first} {last}")
            }
        }
        Org => {
            let stem = pick(ORG_STEMS, rng);
            if rng.gen_bool(0.3) {
                stem
            } else {
                format!("{stem} {}", pick(ORG_SUFFIXES, rng))
            }
        }
        Loc => pick(LOCATIONS, rng),
    }
}

fn render<R: Rng>(units: &[Unit], schemas: &[&RelationSchema], rng: &mut R) -> Sentence {
    let mut s = Sentence { tokens: Vec::new(), entities: Vec::new(), triples: Vec::new(), used: HashSet::new() };
    let cue = |rel: usize, rng: &mut R| schemas[rel].cues[rng.gen_range(0..schemas[rel].cues.len())];
    s.words(PREFIXES[rng.gen_range(0..PREFIXES.len())]);
    for (u, unit) in units.iter().enumerate() {
        if u > 0 {
            s.words(CONNECTORS[rng.gen_range(0..CONNECTORS.len())]);
        }
        match unit {
            Unit::Single { rel, reversed } => {
                let sch = schemas[*rel];
                if *reversed {
                    let o = s.entity(sch.object, rng);
                    s.words(sch.reverse_cues[rng.gen_range(0..sch.reverse_cues.len())]);
                    let subj = s.entity(sch.subject, rng);
                    s.relate(subj, *rel, o);
                } else {
                    let subj = s.entity(sch.subject, rng);
                    s.words(cue(*rel, rng));
                    let o = s.entity(sch.object, rng);
                    s.relate(subj, *rel, o);
                }
            }
            Unit::Hub { rels } => {
                let subj = s.entity(schemas[rels[0]].subject, rng);
                for (i, &rel) in rels.iter().enumerate() {
                    if i > 0 {
                        s.words(if i + 1 == rels.len() { "and" } else { "," });
                    }
                    s.words(cue(rel, rng));
                    let o = s.entity(schemas[rel].object, rng);
                    s.relate(subj, rel, o);
                }
            }
            Unit::Chain { first, second } => {
                let a = s.entity(schemas[*first].subject, rng);
                s.words(cue(*first, rng));
                let x = s.entity(schemas[*first].object, rng);
                s.words(", which");
                s.words(cue(*second, rng));
                let b = s.entity(schemas[*second].object, rng);
                s.relate(a, *first, x);
                s.relate(x, *second, b);
            }
            Unit::Pair { rels } => {
                let subj = s.entity(schemas[rels[0]].subject, rng);
                for (i, &rel) in rels.iter().enumerate() {
                    if i > 0 {
                        s.words(if i + 1 == rels.len() { "and" } else { "," });
                    }
                    s.words(cue(rel, rng));
                }
                let o = s.entity(schemas[rels[0]].object, rng);
                for &rel in rels {
                    s.relate(subj, rel, o);
                }
            }
        }
    }
    s.words(".");
    s
}

/// Leftmost occurrence of every entity must be its own mention, or the JSONL form would not
/// resolve back to the same spans.
fn leftmost_consistent(s: &Sentence) -> bool {
    s.entities.iter().all(|((start, end), surface)| {
        let needle = tokenize(surface);
        s.tokens.windows(needle.len()).position(|w| w == needle.as_slice()) == Some(start - 1)
            && end - start + 1 == needle.len()
    })
}

struct Planner<'a> {
    schemas: &'a [&'static RelationSchema],
    allowed: Vec<bool>,
}

impl Planner<'_> {
    fn any<R: Rng>(&self, rng: &mut R, filter: impl Fn(&RelationSchema) -> bool) -> Option<usize> {
        let ids: Vec<usize> = (0..self.schemas.len()).filter(|&i| self.allowed[i] && filter(self.schemas[i])).collect();
        ids.choose(rng).copied()
    }

    fn single<R: Rng>(&self, rng: &mut R) -> Option<Unit> {
        let rel = self.any(rng, |_| true)?;
        let reversed = !self.schemas[rel].reverse_cues.is_empty() && rng.gen_bool(0.3);
        Some(Unit::Single { rel, reversed })
    }

    fn sharing<R: Rng>(&self, m: usize, rng: &mut R) -> Option<Unit> {
        if m == 2 && rng.gen_bool(0.35) {
            let first = self.any(rng, |_| true)?;
            let mid = self.schemas[first].object;
            if let Some(second) = self.any(rng, |s| s.subject == mid) {
                return Some(Unit::Chain { first, second });
            }
        }
        let first = self.any(rng, |_| true)?;
        let ty = self.schemas[first].subject;
        let mut rels = vec![first];
        for _ in 1..m {
            rels.push(self.any(rng, |s| s.subject == ty)?);
        }
        Some(Unit::Hub { rels })
    }

    fn pair<R: Rng>(&self, m: usize, rng: &mut R) -> Option<Unit> {
        let groups: Vec<Vec<usize>> =
            pair_groups(self.schemas, &self.allowed).into_iter().filter(|g| g.len() >= m).collect();
        let group = groups.choose(rng)?;
        let rels: Vec<usize> = group.choose_multiple(rng, m).copied().collect();
        Some(Unit::Pair { rels })
    }

    fn plan<R: Rng>(&self, pattern: OverlapPattern, n: usize, rng: &mut R) -> Option<Vec<Unit>> {
        let mut units = Vec::new();
        let mut left = n;
        match pattern {
            OverlapPattern::Normal => {}
            OverlapPattern::Seo => {
                let m = rng.gen_range(2..=n.min(3));
                units.push(self.sharing(m, rng)?);
                left -= m;
            }
            OverlapPattern::Epo => {
                let m = if n >= 3 && rng.gen_bool(0.25) { 3 } else { 2 };
                let unit = self.pair(m, rng).or_else(|| if m == 3 { self.pair(2, rng) } else { None })?;
                if let Unit::Pair { rels } = &unit {
                    left -= rels.len();
                }
                units.push(unit);
            }
        }
        for _ in 0..left {
            units.push(self.single(rng)?);
        }
        units.shuffle(rng);
        Some(units)
    }
}

fn sample_count<R: Rng>(weights: &[f64], min: usize, rng: &mut R) -> usize {
    let w: Vec<f64> = weights.iter().enumerate().map(|(i, &x)| if i + 1 >= min { x } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &x) in w.iter().enumerate() {
        if u < x {
            return i + 1;
        }
        u -= x;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap() + 1
}

const MAX_ATTEMPTS: usize = 200;

fn generate_split<R: Rng>(
    manifest: &CorpusManifest,
    schemas: &[&'static RelationSchema],
    size: usize,
    caps: Option<&mut Vec<Option<usize>>>,
    rng: &mut R,
) -> Result<Vec<Example>> {
    let counts = manifest.pattern_counts(size);
    let mut patterns: Vec<OverlapPattern> =
        OverlapPattern::ALL.iter().zip(counts).flat_map(|(&p, c)| std::iter::repeat_n(p, c)).collect();
    patterns.shuffle(rng);
    let mut no_caps = vec![None; schemas.len()];
    let caps = caps.unwrap_or(&mut no_caps);
    let mut out = Vec::with_capacity(size);
    for pattern in patterns {
        let min = if pattern == OverlapPattern::Normal { 1 } else { 2 };
        let mut done = None;
        for _ in 0..MAX_ATTEMPTS {
            let n = sample_count(&manifest.count_mix, min, rng);
            let allowed = caps.iter().map(|c| c.is_none_or(|left| left >= n)).collect();
            let planner = Planner { schemas, allowed };
            let Some(units) = planner.plan(pattern, n, rng) else { continue };
            let s = render(&units, schemas, rng);
            if leftmost_consistent(&s) && classify_overlap(&s.triples)? == pattern {
                done = Some(s);
                break;
            }
        }
        let s = done.ok_or_else(|| Error::Config(format!("could not realize a {pattern} example")))?;
        for t in &s.triples {
            if let Some(left) = caps[t.rel].as_mut() {
                *left -= 1;
            }
        }
        out.push(Example::new(s.tokens, s.triples, manifest.head_word)?);
    }
    Ok(out)
}

/// Builds train/valid/test splits from a manifest. Deterministic in the manifest seed.
pub fn generate_synthetic(manifest: &CorpusManifest) -> Result<SyntheticCorpus> {
    let schemas = manifest.validate()?;
    let relations = manifest.inventory()?;
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut caps: Vec<Option<usize>> = relations
        .labels()
        .iter()
        .map(|l| manifest.rare_relations.contains(l).then_some(manifest.rare_train_cap))
        .collect();
    let train = generate_split(manifest, &schemas, manifest.train, Some(&mut caps), &mut rng)?;
    let valid = generate_split(manifest, &schemas, manifest.valid, None, &mut rng)?;
    let test = generate_split(manifest, &schemas, manifest.test, None, &mut rng)?;
    Ok(SyntheticCorpus { manifest: manifest.clone(), relations, train, valid, test })
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl`, `relations.txt` and `manifest.toml`.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_jsonl(&dir.join("train.jsonl"), &corpus.train, &corpus.relations)?;
    save_jsonl(&dir.join("valid.jsonl"), &corpus.valid, &corpus.relations)?;
    save_jsonl(&dir.join("test.jsonl"), &corpus.test, &corpus.relations)?;
    corpus.relations.save(&dir.join(RELATIONS_FILE))?;
    corpus.manifest.save(&dir.join("manifest.toml"))
}
