use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexMap;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use super::ast::Program;
use super::{parse, primitive, validate, InterpError, BOUNDS};

#[derive(Debug, Clone, PartialEq)]
pub struct SkillDef {
    pub name: String,
    pub params: Vec<String>,
    pub description: String,
    pub input_doc: String,
    pub output_doc: String,
    /// Functions the body uses, as declared by the author.
    pub related: Vec<String>,
    /// One-line call that exercises the skill.
    pub example: String,
    pub body: Program,
}

impl SkillDef {
    pub fn signature(&self) -> String {
        format!("{}({})", self.name, self.params.join(", "))
    }

    pub fn related_text(&self) -> String {
        self.related.iter().map(|r| format!("{r}()")).collect::<Vec<_>>().join(", ")
    }

    /// Build a definition from one library-file entry keyed by its
    /// signature. The body is parsed but not validated.
    pub fn from_entry(sig: &str, entry: &Json) -> Result<SkillDef, LibraryError> {
        let (name, params) = parse_signature(sig)?;
        let obj = entry.as_object().ok_or_else(|| LibraryError::Schema(format!("'{sig}' must be an object")))?;
        let field = |k: &str, required: bool| -> Result<String, LibraryError> {
            match obj.get(k) {
                Some(Json::String(s)) => Ok(s.clone()),
                None if !required => Ok(String::new()),
                _ => Err(LibraryError::Schema(format!("'{sig}' needs a string field \"{k}\""))),
            }
        };
        let kind = field("Type", false)?;
        if !kind.is_empty() && kind != "function" {
            return Err(LibraryError::Schema(format!("'{sig}' has unsupported Type '{kind}'")));
        }
        let code = field("Code", true)?;
        let body = parse(&code).map_err(|source| LibraryError::Invalid { skill: name.clone(), source })?;
        Ok(SkillDef {
            name,
            params,
            description: field("Description", true)?,
            input_doc: field("Input", false)?,
            output_doc: field("Output", false)?,
            related: parse_related(&field("Related functions", false)?),
            example: field("Example", false)?,
            body,
        })
    }

    /// Callees actually used by the body.
    pub fn callees(&self) -> BTreeSet<String> {
        self.body.callees()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LibraryError {
    #[error("'{0}' is already defined")]
    Duplicate(String),
    #[error("skill '{skill}' is invalid: {source}")]
    Invalid { skill: String, source: InterpError },
    #[error("'{skill}' is used by '{by}'")]
    InUse { skill: String, by: String },
    #[error("unknown skill '{0}'")]
    Unknown(String),
    #[error("library schema error: {0}")]
    Schema(String),
    #[error("library io error: {0}")]
    Io(String),
}

/// Acquired skills in insertion order. Primitives are implicit.
///
/// A skill may only call primitives and skills added before it, so the
/// insertion order is a topological order of the call graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkillLibrary {
    skills: IndexMap<String, SkillDef>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Split `name(a, b)` into its name and parameter list.
pub fn parse_signature(sig: &str) -> Result<(String, Vec<String>), LibraryError> {
    let sig = sig.trim();
    let bad = || LibraryError::Schema(format!("malformed signature '{sig}'"));
    let open = sig.find('(').ok_or_else(bad)?;
    if !sig.ends_with(')') {
        return Err(bad());
    }
    let name = sig[..open].trim().to_string();
    if !is_identifier(&name) {
        return Err(bad());
    }
    let inner = sig[open + 1..sig.len() - 1].trim();
    let params: Vec<String> =
        if inner.is_empty() { Vec::new() } else { inner.split(',').map(|p| p.trim().to_string()).collect() };
    if params.iter().any(|p| !is_identifier(p)) {
        return Err(bad());
    }
    Ok((name, params))
}

/// Split a `a(), b()` list into names.
pub fn parse_related(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().trim_end_matches("()").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl SkillLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&SkillDef> {
        self.skills.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.skills.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SkillDef> {
        self.skills.values()
    }

    pub fn names(&self) -> Vec<String> {
        self.skills.keys().cloned().collect()
    }

    /// Return a new library with `def` appended.
    pub fn add_skill(&self, def: SkillDef) -> Result<SkillLibrary, LibraryError> {
        let mut next = self.clone();
        next.insert(def)?;
        Ok(next)
    }

    /// Append in place; same checks as [`SkillLibrary::add_skill`].
    pub fn insert(&mut self, def: SkillDef) -> Result<(), LibraryError> {
        if primitive(&def.name).is_some() || def.name == BOUNDS || self.skills.contains_key(&def.name) {
            return Err(LibraryError::Duplicate(def.name));
        }
        if !is_identifier(&def.name) {
            return Err(LibraryError::Schema(format!("'{}' is not an identifier", def.name)));
        }
        let unique: BTreeSet<_> = def.params.iter().collect();
        if unique.len() != def.params.len() || def.params.iter().any(|p| !is_identifier(p) || p == BOUNDS) {
            return Err(LibraryError::Schema(format!("'{}' has invalid parameters", def.name)));
        }
        validate(&def.body, self, &def.params)
            .map_err(|source| LibraryError::Invalid { skill: def.name.clone(), source })?;
        self.skills.insert(def.name.clone(), def);
        Ok(())
    }

    /// Dependency edges `skill -> callee` (callees may be primitives).
    pub fn dag_edges(&self) -> Vec<(String, String)> {
        self.skills
            .values()
            .flat_map(|s| s.callees().into_iter().map(move |c| (s.name.clone(), c)))
            .collect()
    }

    /// Remove skills by name. Fails if a remaining skill still calls one.
    pub fn prune(&self, names: &[String]) -> Result<SkillLibrary, LibraryError> {
        for n in names {
            if !self.skills.contains_key(n) {
                return Err(LibraryError::Unknown(n.clone()));
            }
        }
        let mut next = self.clone();
        next.skills.retain(|k, _| !names.contains(k));
        for s in next.skills.values() {
            if let Some(dep) = s.callees().into_iter().find(|c| names.contains(c)) {
                return Err(LibraryError::InUse { skill: dep, by: s.name.clone() });
            }
        }
        Ok(next)
    }

    /// One line per primitive and skill, for prompts.
    pub fn signatures(&self, include_primitives: bool) -> Vec<String> {
        let mut out = Vec::new();
        if include_primitives {
            for p in super::action_primitives() {
                out.push(format!("{}: {}", p.signature(), p.description));
            }
        }
        for s in self.skills.values() {
            out.push(format!("{}: {}", s.signature(), s.description));
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let mut root = Map::new();
        for s in self.skills.values() {
            let mut entry = Map::new();
            entry.insert("Type".into(), Json::from("function"));
            entry.insert("Description".into(), Json::from(s.description.clone()));
            entry.insert("Input".into(), Json::from(s.input_doc.clone()));
            entry.insert("Output".into(), Json::from(s.output_doc.clone()));
            entry.insert("Related functions".into(), Json::from(s.related_text()));
            entry.insert("Example".into(), Json::from(s.example.clone()));
            entry.insert("Code".into(), Json::from(s.body.to_canonical()));
            root.insert(s.signature(), Json::Object(entry));
        }
        Json::Object(root)
    }

    /// Canonical file text.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("library serializes");
        s.push('\n');
        s
    }

    pub fn from_json(doc: &Json) -> Result<SkillLibrary, LibraryError> {
        let root = doc.as_object().ok_or_else(|| LibraryError::Schema("library must be a JSON object".into()))?;
        let mut lib = SkillLibrary::new();
        for (sig, entry) in root {
            lib.insert(SkillDef::from_entry(sig, entry)?)?;
        }
        Ok(lib)
    }

    pub fn from_json_str(text: &str) -> Result<SkillLibrary, LibraryError> {
        let doc: Json = serde_json::from_str(text).map_err(|e| LibraryError::Schema(e.to_string()))?;
        Self::from_json(&doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), LibraryError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| LibraryError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<SkillLibrary, LibraryError> {
        let text = std::fs::read_to_string(path).map_err(|e| LibraryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}
