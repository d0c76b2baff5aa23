//! Multilingual knowledge base: entity records, the class filter applied at
//! ingest, canonical-name selection and `(name, language) -> entity` lookup.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::codec::SEPARATOR;
use crate::error::{Error, Result};
use crate::text::nfc;

/// Opaque, non-empty entity identifier (Q-number style).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidEntityId(format!("{id:?}")));
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> String {
        id.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Language code: 2-12 lowercase ASCII letters or hyphens.
///
/// Excluding whitespace and `>` keeps the rendered `lang >> name` form
/// unambiguous.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let ok = (2..=12).contains(&code.len())
            && code.bytes().all(|b| b.is_ascii_lowercase() || b == b'-');
        if ok {
            Ok(LanguageCode(code))
        } else {
            Err(Error::InvalidLanguage(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageCode {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        LanguageCode::new(value)
    }
}

impl From<LanguageCode> for String {
    fn from(code: LanguageCode) -> String {
        code.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A KB entity with its per-language titles, redirects and mention counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    /// Primary title per language.
    pub names: BTreeMap<LanguageCode, String>,
    /// Alternate names (redirect titles) per language.
    pub redirects: BTreeMap<LanguageCode, BTreeSet<String>>,
    /// Training mentions of this entity in documents of each language.
    pub mention_counts: BTreeMap<LanguageCode, u64>,
}

impl EntityRecord {
    pub fn new(id: EntityId) -> Self {
        EntityRecord {
            id,
            names: BTreeMap::new(),
            redirects: BTreeMap::new(),
            mention_counts: BTreeMap::new(),
        }
    }

    pub fn with_name(mut self, lang: &str, name: &str) -> Result<Self> {
        self.names.insert(LanguageCode::new(lang)?, nfc(name));
        Ok(self)
    }

    pub fn with_redirect(mut self, lang: &str, name: &str) -> Result<Self> {
        self.redirects
            .entry(LanguageCode::new(lang)?)
            .or_default()
            .insert(nfc(name));
        Ok(self)
    }

    pub fn with_count(mut self, lang: &str, count: u64) -> Result<Self> {
        self.mention_counts.insert(LanguageCode::new(lang)?, count);
        Ok(self)
    }

    /// Checks the record-level invariants and drops redirects that repeat the
    /// primary title of the same language.
    fn validate(&mut self) -> std::result::Result<(), String> {
        for (lang, name) in &self.names {
            if name.is_empty() {
                return Err(format!("empty name for language {lang}"));
            }
            if name.contains(SEPARATOR) {
                return Err(format!("name {name:?} contains the separator {SEPARATOR:?}"));
            }
        }
        for (lang, alts) in self.redirects.iter_mut() {
            alts.retain(|alt| !alt.is_empty());
            if let Some(primary) = self.names.get(lang) {
                alts.remove(primary);
            }
            if let Some(bad) = alts.iter().find(|alt| alt.contains(SEPARATOR)) {
                return Err(format!("redirect {bad:?} contains the separator {SEPARATOR:?}"));
            }
        }
        self.redirects.retain(|_, alts| !alts.is_empty());
        Ok(())
    }
}

/// One line of the KB JSON-lines file.
#[derive(Debug, Serialize, Deserialize)]
pub struct KbLine {
    pub id: String,
    #[serde(default)]
    pub names: BTreeMap<String, String>,
    #[serde(default)]
    pub redirects: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
    /// Classes the entity instantiates or subclasses, pre-flattened.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
}

impl KbLine {
    fn into_record(self) -> std::result::Result<(EntityRecord, BTreeSet<EntityId>), String> {
        let id = EntityId::new(self.id).map_err(|e| e.to_string())?;
        let lang = |l: String| LanguageCode::new(l).map_err(|e| e.to_string());
        let mut record = EntityRecord::new(id);
        for (l, name) in self.names {
            record.names.insert(lang(l)?, nfc(&name));
        }
        for (l, alts) in self.redirects {
            let set = record.redirects.entry(lang(l)?).or_default();
            set.extend(alts.iter().map(|a| nfc(a)));
        }
        for (l, count) in self.counts {
            record.mention_counts.insert(lang(l)?, count);
        }
        let classes = self
            .classes
            .into_iter()
            .map(|c| EntityId::new(c).map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()?;
        record.validate()?;
        Ok((record, classes))
    }

    pub fn from_record(record: &EntityRecord) -> Self {
        KbLine {
            id: record.id.to_string(),
            names: record
                .names
                .iter()
                .map(|(l, n)| (l.to_string(), n.clone()))
                .collect(),
            redirects: record
                .redirects
                .iter()
                .map(|(l, r)| (l.to_string(), r.iter().cloned().collect()))
                .collect(),
            counts: record
                .mention_counts
                .iter()
                .map(|(l, c)| (l.to_string(), *c))
                .collect(),
            classes: Vec::new(),
        }
    }
}

/// Parsed contents of a KB JSON-lines file: records plus the class
/// memberships carried alongside them.
#[derive(Debug, Default)]
pub struct KbSource {
    pub records: Vec<EntityRecord>,
    pub class_memberships: HashMap<EntityId, BTreeSet<EntityId>>,
}

pub fn read_kb_jsonl(path: &Path) -> Result<KbSource> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_kb_jsonl(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_kb_jsonl(reader: impl BufRead) -> Result<KbSource> {
    let mut source = KbSource::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<kb>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: KbLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let (record, classes) = raw.into_record().map_err(|reason| Error::MalformedRecord {
            line: line_no,
            reason,
        })?;
        if !classes.is_empty() {
            source.class_memberships.insert(record.id.clone(), classes);
        }
        source.records.push(record);
    }
    Ok(source)
}

/// Plain-text filter list: one excluded class id per line, `#` comments allowed.
pub fn parse_class_filter(text: &str) -> Result<BTreeSet<EntityId>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(EntityId::new)
        .collect()
}

/// Wikimedia organizational classes (categories, templates, project pages,
/// ...) whose instances and subclasses are not linkable entities.
pub const ORGANIZATIONAL_CLASSES: [&str; 14] = [
    "Q4167836",  // category
    "Q24046192", // category stub
    "Q20010800", // user category
    "Q11266439", // template
    "Q11753321", // navigational template
    "Q19842659", // user template
    "Q21528878", // redirect page
    "Q17362920", // duplicated page
    "Q14204246", // project page
    "Q21025364", // project page
    "Q17442446", // internal item
    "Q26267864", // KML file
    "Q4663903",  // portal
    "Q15184295", // module
];

pub fn default_class_filter() -> BTreeSet<EntityId> {
    ORGANIZATIONAL_CLASSES
        .iter()
        .map(|q| EntityId((*q).to_owned()))
        .collect()
}

/// Immutable, indexed multilingual knowledge base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: BTreeMap<EntityId, EntityRecord>,
    name_index: HashMap<(String, LanguageCode), BTreeSet<EntityId>>,
    global_lang_counts: BTreeMap<LanguageCode, u64>,
    languages: BTreeSet<LanguageCode>,
}

/// Builds a KB from records, keeping entities that have at least one name
/// and belong to none of the excluded classes.
pub fn ingest_kb(
    records: impl IntoIterator<Item = EntityRecord>,
    excluded_classes: &BTreeSet<EntityId>,
    class_memberships: &HashMap<EntityId, BTreeSet<EntityId>>,
) -> Result<KnowledgeBase> {
    let mut seen = BTreeSet::new();
    let mut entities = BTreeMap::new();
    for mut record in records {
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateEntity(record.id.to_string()));
        }
        record.validate().map_err(|reason| Error::MalformedRecord {
            line: seen.len(),
            reason,
        })?;
        if record.names.is_empty() {
            continue;
        }
        let excluded = class_memberships
            .get(&record.id)
            .is_some_and(|classes| !classes.is_disjoint(excluded_classes));
        if excluded {
            continue;
        }
        entities.insert(record.id.clone(), record);
    }
    KnowledgeBase::from_entities(entities)
}

impl KnowledgeBase {
    fn from_entities(mut entities: BTreeMap<EntityId, EntityRecord>) -> Result<Self> {
        let mut titles: HashMap<(String, LanguageCode), EntityId> = HashMap::new();
        for record in entities.values() {
            for (lang, name) in &record.names {
                let key = (name.clone(), lang.clone());
                if let Some(other) = titles.insert(key, record.id.clone()) {
                    return Err(Error::DuplicateTitle {
                        name: name.clone(),
                        lang: lang.to_string(),
                        first: other.to_string(),
                        second: record.id.to_string(),
                    });
                }
            }
        }
        // A redirect cannot shadow another entity's title in the same language.
        for record in entities.values_mut() {
            for (lang, alts) in record.redirects.iter_mut() {
                alts.retain(|alt| !titles.contains_key(&(alt.clone(), lang.clone())));
            }
            record.redirects.retain(|_, alts| !alts.is_empty());
        }

        let mut name_index: HashMap<(String, LanguageCode), BTreeSet<EntityId>> = HashMap::new();
        let mut global_lang_counts: BTreeMap<LanguageCode, u64> = BTreeMap::new();
        let mut languages = BTreeSet::new();
        for record in entities.values() {
            for (lang, name) in record.all_names() {
                languages.insert(lang.clone());
                name_index
                    .entry((name.to_owned(), lang.clone()))
                    .or_default()
                    .insert(record.id.clone());
            }
            for (lang, count) in &record.mention_counts {
                *global_lang_counts.entry(lang.clone()).or_default() += count;
            }
        }
        Ok(KnowledgeBase {
            entities,
            name_index,
            global_lang_counts,
            languages,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Result<&EntityRecord> {
        self.entities
            .get(id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn global_lang_counts(&self) -> &BTreeMap<LanguageCode, u64> {
        &self.global_lang_counts
    }

    pub fn name_index_len(&self) -> usize {
        self.name_index.len()
    }

    /// Data-driven canonical title: the language with the most mentions of
    /// the entity, then the language with the most mentions overall, then the
    /// smallest language code. Redirects never compete.
    pub fn canonical_name(&self, id: &EntityId) -> Result<(LanguageCode, String)> {
        let record = self.get(id)?;
        let global = |l: &LanguageCode| self.global_lang_counts.get(l).copied().unwrap_or(0);
        let local = |l: &LanguageCode| record.mention_counts.get(l).copied().unwrap_or(0);
        record
            .names
            .iter()
            .max_by(|(a, _), (b, _)| {
                local(a)
                    .cmp(&local(b))
                    .then_with(|| global(a).cmp(&global(b)))
                    // reversed: smaller code wins under max_by
                    .then_with(|| b.cmp(a))
            })
            .map(|(l, n)| (l.clone(), n.clone()))
            .ok_or_else(|| Error::EntityHasNoNames(id.to_string()))
    }

    /// Entities carrying `name` (title or redirect) in `lang`, or in any
    /// language when `lang` is `None`.
    pub fn resolve(&self, name: &str, lang: Option<&LanguageCode>) -> BTreeSet<EntityId> {
        let name = nfc(name);
        match lang {
            Some(lang) => self
                .name_index
                .get(&(name, lang.clone()))
                .cloned()
                .unwrap_or_default(),
            None => {
                let mut out = BTreeSet::new();
                for lang in self.languages_of_name(&name) {
                    if let Some(ids) = self.name_index.get(&(name.clone(), lang)) {
                        out.extend(ids.iter().cloned());
                    }
                }
                out
            }
        }
    }

    fn languages_of_name(&self, name: &str) -> Vec<LanguageCode> {
        // The index is keyed by (name, lang); probing each known language is
        // far cheaper than scanning the index.
        self.languages
            .iter()
            .filter(|l| self.name_index.contains_key(&(name.to_owned(), (*l).clone())))
            .cloned()
            .collect()
    }

    /// Every language that carries at least one title or redirect.
    pub fn languages(&self) -> &BTreeSet<LanguageCode> {
        &self.languages
    }

    /// The entity whose primary title in `lang` is `name`, if any.
    pub fn title_owner(&self, name: &str, lang: &LanguageCode) -> Option<&EntityId> {
        let name = nfc(name);
        self.name_index
            .get(&(name.clone(), lang.clone()))?
            .iter()
            .find(|id| self.entities[*id].names.get(lang) == Some(&name))
    }

    /// All `(language, name)` identifiers of an entity.
    pub fn identifiers(
        &self,
        id: &EntityId,
        include_redirects: bool,
    ) -> Result<BTreeSet<(LanguageCode, String)>> {
        let record = self.get(id)?;
        Ok(record
            .identifier_entries()
            .filter(|(_, _, redirect)| include_redirects || !redirect)
            .map(|(l, n, _)| (l.clone(), n.to_owned()))
            .collect())
    }

    /// Stable on-disk form: the retained records, indices rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<&EntityRecord> = self.entities.values().collect();
        artifact::write(path, artifact::Kind::Kb, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<EntityRecord> = artifact::read(path, artifact::Kind::Kb)?;
        let mut entities = BTreeMap::new();
        for record in records {
            let id = record.id.clone();
            if entities.insert(id.clone(), record).is_some() {
                return Err(Error::DuplicateEntity(id.to_string()));
            }
        }
        KnowledgeBase::from_entities(entities)
    }
}

impl EntityRecord {
    /// Titles then redirects, each tagged with whether it is a redirect.
    pub fn identifier_entries(&self) -> impl Iterator<Item = (&LanguageCode, &str, bool)> {
        let titles = self.names.iter().map(|(l, n)| (l, n.as_str(), false));
        let redirects = self
            .redirects
            .iter()
            .flat_map(|(l, alts)| alts.iter().map(move |a| (l, a.as_str(), true)));
        titles.chain(redirects)
    }

    fn all_names(&self) -> impl Iterator<Item = (&LanguageCode, &str)> {
        self.identifier_entries().map(|(l, n, _)| (l, n))
    }
}
