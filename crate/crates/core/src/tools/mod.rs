//! Read-only code exploration functions offered to the chat model.
//!
//! Every call returns a [`ToolResult`]; misses, bad arguments and disabled
//! tools are reported to the model as text, never raised.

mod fuzzy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::code_index::{basename, CodeIndex, MethodRecord, SourceFileRecord};
use crate::embedding::Shortlist;

pub use fuzzy::{
    damerau_levenshtein, default_cap, fuzzy_method_candidates, nearest_names, FuzzyCandidate, DEFAULT_FUZZY_CANDIDATES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SearchFile,
    SearchMethod,
    GetCandidateFilenames,
    GetMethodSignaturesOfAFile,
    GetMethodBody,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::SearchFile,
        ToolName::SearchMethod,
        ToolName::GetCandidateFilenames,
        ToolName::GetMethodSignaturesOfAFile,
        ToolName::GetMethodBody,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SearchFile => "search_file",
            ToolName::SearchMethod => "search_method",
            ToolName::GetCandidateFilenames => "get_candidate_filenames",
            ToolName::GetMethodSignaturesOfAFile => "get_method_signatures_of_a_file",
            ToolName::GetMethodBody => "get_method_body",
        }
    }

    /// One-line description shown to the model.
    pub fn description(self) -> &'static str {
        match self {
            ToolName::SearchFile => "Check whether a file exists. Accepts a file name such as `Foo.java` or a path fragment; returns matching paths.",
            ToolName::SearchMethod => "Find the files that define a method with the given name.",
            ToolName::GetCandidateFilenames => "List the files whose content is most similar to the bug report, most similar first.",
            ToolName::GetMethodSignaturesOfAFile => "List the signatures of all methods declared in a file, in source order.",
            ToolName::GetMethodBody => "Return the source of a method. Pass `fq_path` to look only in that file; without it every file is searched.",
        }
    }

    fn parameters(self) -> Value {
        let string = |d: &str| json!({ "type": "string", "description": d });
        match self {
            ToolName::SearchFile => json!({
                "type": "object",
                "properties": { "name": string("file name or path fragment") },
                "required": ["name"],
            }),
            ToolName::SearchMethod => json!({
                "type": "object",
                "properties": { "name": string("method name") },
                "required": ["name"],
            }),
            ToolName::GetCandidateFilenames => json!({ "type": "object", "properties": {} }),
            ToolName::GetMethodSignaturesOfAFile => json!({
                "type": "object",
                "properties": { "fq_path": string("full path of the file") },
                "required": ["fq_path"],
            }),
            ToolName::GetMethodBody => json!({
                "type": "object",
                "properties": {
                    "fq_path": string("full path of the file (optional)"),
                    "method": string("method name"),
                },
                "required": ["method"],
            }),
        }
    }

    pub fn schema(self) -> ToolSchema {
        ToolSchema { name: self, description: self.description().to_string(), parameters: self.parameters() }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown tool `{s}`"))
    }
}

/// Name, description and JSON-schema parameters of a tool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSchema {
    pub name: ToolName,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub ok: bool,
    pub payload: String,
    /// Set whenever the payload came from a fallback rather than an exact hit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ToolResult {
    fn ok(payload: impl Into<String>) -> Self {
        Self { ok: true, payload: payload.into(), note: None }
    }

    fn recovered(payload: impl Into<String>, note: impl Into<String>) -> Self {
        Self { ok: true, payload: payload.into(), note: Some(note.into()) }
    }

    fn error(payload: impl Into<String>) -> Self {
        Self { ok: false, payload: payload.into(), note: None }
    }

    fn not_found(what: impl fmt::Display) -> Self {
        Self::ok(format!("not found: {what}"))
    }

    /// The text fed back to the model: the note (if any) then the payload.
    pub fn render(&self) -> String {
        match &self.note {
            Some(note) => format!("[{note}]\n{}", self.payload),
            None => self.payload.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToolConfig {
    /// Most fuzzy suggestions returned on a method-name miss.
    pub fuzzy_candidates: usize,
    /// Edit-distance cap; `None` uses [`default_cap`].
    pub fuzzy_cap: Option<usize>,
    /// Most paths listed by `search_file`.
    pub max_listed_paths: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self { fuzzy_candidates: DEFAULT_FUZZY_CANDIDATES, fuzzy_cap: None, max_listed_paths: 50 }
    }
}

/// The tools bound to one version's index and one bug's shortlist.
#[derive(Debug, Clone)]
pub struct ToolRegistry<'a> {
    index: &'a CodeIndex,
    shortlist: Option<&'a Shortlist>,
    enabled: BTreeSet<ToolName>,
    config: ToolConfig,
}

impl<'a> ToolRegistry<'a> {
    /// All five tools when a shortlist is bound; without one,
    /// `get_candidate_filenames` is unavailable.
    pub fn new(index: &'a CodeIndex, shortlist: Option<&'a Shortlist>) -> Self {
        let enabled = ToolName::ALL
            .into_iter()
            .filter(|t| shortlist.is_some() || *t != ToolName::GetCandidateFilenames)
            .collect();
        Self { index, shortlist, enabled, config: ToolConfig::default() }
    }

    /// Restricts the enabled tools to `whitelist`.
    pub fn restrict(mut self, whitelist: &BTreeSet<ToolName>) -> Self {
        self.enabled.retain(|t| whitelist.contains(t));
        self
    }

    pub fn with_config(mut self, config: ToolConfig) -> Self {
        self.config = config;
        self
    }

    pub fn enabled(&self) -> &BTreeSet<ToolName> {
        &self.enabled
    }

    /// Size of the bound shortlist when `get_candidate_filenames` is enabled.
    pub fn shortlist_len(&self) -> Option<usize> {
        self.shortlist.filter(|_| self.enabled.contains(&ToolName::GetCandidateFilenames)).map(Shortlist::len)
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.enabled.iter().map(|t| t.schema()).collect()
    }

    /// Runs a tool by name with JSON arguments.
    pub fn dispatch(&self, name: &str, args: &BTreeMap<String, Value>) -> ToolResult {
        let Ok(tool) = name.parse::<ToolName>() else {
            return ToolResult::error(format!("tool unavailable: unknown tool `{name}`"));
        };
        if !self.enabled.contains(&tool) {
            return ToolResult::error(format!("tool unavailable: {tool} is not enabled in this run"));
        }
        let arg = |key: &str| args.get(key).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
        let missing = |key: &str| ToolResult::error(format!("{tool} requires a non-empty string argument `{key}`"));
        match tool {
            ToolName::SearchFile => arg("name").map_or_else(|| missing("name"), |n| self.search_file(n)),
            ToolName::SearchMethod => arg("name").map_or_else(|| missing("name"), |n| self.search_method(n)),
            ToolName::GetCandidateFilenames => self.get_candidate_filenames(),
            ToolName::GetMethodSignaturesOfAFile => {
                arg("fq_path").map_or_else(|| missing("fq_path"), |p| self.get_method_signatures_of_a_file(p))
            }
            ToolName::GetMethodBody => {
                arg("method").map_or_else(|| missing("method"), |m| self.get_method_body(arg("fq_path"), m))
            }
        }
    }

    /// Files matching `name`: the exact path, else exact basename, else
    /// case-insensitive basename, else case-insensitive path substring.
    /// Returns the matches and a note when a fallback tier matched.
    fn find_files(&self, name: &str) -> (Vec<&'a SourceFileRecord>, Option<String>) {
        let index = self.index;
        if let Some(f) = index.file(name) {
            return (vec![f], None);
        }
        let base = basename(name);
        let exact: Vec<_> = index.files().filter(|f| f.basename == base).collect();
        if !exact.is_empty() {
            let note = (base != name).then(|| format!("path `{name}` not found; matched by file name `{base}`"));
            return (exact, note);
        }
        let lower = base.to_lowercase();
        let folded: Vec<_> = index.files().filter(|f| f.basename.to_lowercase() == lower).collect();
        if !folded.is_empty() {
            return (folded, Some(format!("no exact match for `{name}`; matched file name ignoring case")));
        }
        let needle = name.to_lowercase();
        let partial: Vec<_> = index.files().filter(|f| f.fq_path.to_lowercase().contains(&needle)).collect();
        if !partial.is_empty() {
            return (partial, Some(format!("no file named `{name}`; listing paths containing it")));
        }
        (Vec::new(), None)
    }

    pub fn search_file(&self, name: &str) -> ToolResult {
        let (files, note) = self.find_files(name);
        if files.is_empty() {
            return ToolResult::not_found(format!("no file matches `{name}`"));
        }
        let limit = self.config.max_listed_paths;
        let mut payload = files.iter().take(limit).map(|f| f.fq_path.as_str()).collect::<Vec<_>>().join("\n");
        if files.len() > limit {
            let _ = write!(payload, "\n... and {} more", files.len() - limit);
        }
        ToolResult { ok: true, payload, note }
    }

    pub fn search_method(&self, name: &str) -> ToolResult {
        let (query, cleaned) = clean_method_name(name);
        if let Some(paths) = self.index.files_defining(query) {
            let payload = paths.iter().cloned().collect::<Vec<_>>().join("\n");
            return match cleaned {
                true => ToolResult::recovered(payload, format!("searched for method name `{query}`")),
                false => ToolResult::ok(payload),
            };
        }
        let candidates =
            fuzzy_method_candidates(query, self.index, self.config.fuzzy_candidates, self.config.fuzzy_cap);
        if candidates.is_empty() {
            return ToolResult::not_found(format!("no method named `{query}`"));
        }
        let payload = candidates.iter().map(|c| format!("{} in {}", c.name, c.fq_path)).collect::<Vec<_>>().join("\n");
        let names: BTreeSet<&str> = candidates.iter().map(|c| c.name.as_str()).collect();
        let names = names.into_iter().collect::<Vec<_>>().join(", ");
        ToolResult::recovered(payload, format!("no method named `{query}`; fuzzy-matched from `{query}` to: {names}"))
    }

    pub fn get_candidate_filenames(&self) -> ToolResult {
        let Some(shortlist) = self.shortlist.filter(|_| self.enabled.contains(&ToolName::GetCandidateFilenames)) else {
            return ToolResult::error("tool unavailable: get_candidate_filenames is not enabled in this run");
        };
        if shortlist.is_empty() {
            return ToolResult::ok("no candidate files");
        }
        ToolResult::ok(shortlist.paths().collect::<Vec<_>>().join("\n"))
    }

    pub fn get_method_signatures_of_a_file(&self, fq_path: &str) -> ToolResult {
        if let Some(file) = self.index.file(fq_path) {
            return ToolResult::ok(signatures(file));
        }
        let (files, _) = self.find_files(basename(fq_path));
        let files: Vec<_> = files.into_iter().filter(|f| f.basename == basename(fq_path)).collect();
        if files.is_empty() {
            return ToolResult::not_found(format!("no file `{fq_path}`"));
        }
        let payload =
            files.iter().map(|f| format!("{}:\n{}", f.fq_path, signatures(f))).collect::<Vec<_>>().join("\n\n");
        ToolResult::recovered(
            payload,
            format!("path `{fq_path}` not found; showing files named `{}`", basename(fq_path)),
        )
    }

    pub fn get_method_body(&self, fq_path: Option<&str>, method: &str) -> ToolResult {
        let (name, _) = clean_method_name(method);
        match fq_path {
            Some(path) => self.body_in_file(path, name),
            None => self.body_anywhere(name),
        }
    }

    fn body_in_file(&self, path: &str, name: &str) -> ToolResult {
        let mut notes = Vec::new();
        let file = match self.index.file(path) {
            Some(f) => f,
            None => match self.index.files_with_basename(basename(path)).next() {
                Some(f) => {
                    notes.push(format!("path `{path}` not found; using `{}`", f.fq_path));
                    f
                }
                None => return ToolResult::not_found(format!("no file `{path}`")),
            },
        };
        let mut target = name;
        if !file.methods.iter().any(|m| m.name == name) {
            let cap = self.config.fuzzy_cap.unwrap_or_else(|| default_cap(name));
            match nearest_names(name, file.methods.iter().map(|m| m.name.as_str()), cap).first() {
                Some((nearest, _)) => {
                    notes.push(format!(
                        "no method `{name}` in {}; fuzzy-matched from `{name}` to `{nearest}`",
                        file.fq_path
                    ));
                    target = nearest;
                }
                None => {
                    return ToolResult::not_found(format!(
                        "no method `{name}` in {}; available signatures:\n{}",
                        file.fq_path,
                        signatures(file)
                    ))
                }
            }
        }
        let payload = bodies(file.methods.iter().filter(|m| m.name == target).map(|m| (None, m)));
        ToolResult { ok: true, payload, note: (!notes.is_empty()).then(|| notes.join("; ")) }
    }

    fn body_anywhere(&self, name: &str) -> ToolResult {
        let mut note = format!("no file given; searched every file for `{name}`");
        let target = match self.index.files_defining(name) {
            Some(_) => name.to_string(),
            None => {
                let found = fuzzy_method_candidates(name, self.index, 1, self.config.fuzzy_cap);
                let Some(best) = found.into_iter().next() else {
                    return ToolResult::not_found(format!("no method named `{name}`"));
                };
                let _ = write!(note, "; fuzzy-matched from `{name}` to `{}`", best.name);
                best.name
            }
        };
        let mut hits = Vec::new();
        for path in &self.index.files_defining(&target).cloned().unwrap_or_default() {
            if let Some(file) = self.index.file(path) {
                hits.extend(file.methods.iter().filter(|m| m.name == target).map(|m| (Some(file.fq_path.as_str()), m)));
            }
        }
        ToolResult::recovered(bodies(hits.into_iter()), note)
    }
}

/// Strips call syntax and qualifiers: `Foo.bar(int)` becomes `bar`.
/// The flag reports whether anything was removed.
fn clean_method_name(raw: &str) -> (&str, bool) {
    let trimmed = raw.trim();
    let head = trimmed.split('(').next().unwrap_or(trimmed).trim();
    let name = head.rsplit(['.', '#', ':']).next().unwrap_or(head).trim();
    if name.is_empty() {
        return (trimmed, false);
    }
    (name, name != trimmed)
}

fn signatures(file: &SourceFileRecord) -> String {
    if file.methods.is_empty() {
        return match &file.parse_error {
            Some(e) => format!("(file could not be parsed: {e})"),
            None => "(no methods declared)".to_string(),
        };
    }
    file.methods.iter().map(|m| m.signature.as_str()).collect::<Vec<_>>().join("\n")
}

/// Each method as `// signature` (prefixed by its path when given) followed
/// by its body.
fn bodies<'m>(methods: impl Iterator<Item = (Option<&'m str>, &'m MethodRecord)>) -> String {
    let mut out = Vec::new();
    for (path, m) in methods {
        let header = match path {
            Some(p) => format!("// {p} :: {}", m.signature),
            None => format!("// {}", m.signature),
        };
        let body = if m.has_body { m.body.as_str() } else { "(declared without a body)" };
        out.push(format!("{header}\n{body}"));
    }
    out.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::ShortlistEntry;

    fn method(name: &str, sig: &str, body: &str) -> MethodRecord {
        MethodRecord { name: name.into(), signature: sig.into(), body: body.into(), has_body: true }
    }

    fn file(path: &str, methods: Vec<MethodRecord>) -> SourceFileRecord {
        SourceFileRecord {
            fq_path: path.into(),
            basename: basename(path).into(),
            methods,
            parse_ok: true,
            parse_error: None,
            digest: String::new(),
        }
    }

    fn fixture() -> CodeIndex {
        CodeIndex::from_records(
            "v1",
            "java",
            vec![
                file(
                    "org/eclipse/jdt/ui/JavaElementLabels.java",
                    vec![method("updateLabel", "updateLabel()", "{ a(); }")],
                ),
                file("org/eclipse/jdt/ui/Labels.java", vec![]),
                file(
                    "org/apache/catalina/startup/Catalina.java",
                    vec![
                        method("start", "start()", "{ server.start(); }"),
                        method("stop", "stop()", "{ server.stop(); }"),
                        method("load", "load(String[])", "{ parse(args); }"),
                        method("load", "load()", "{ load(null); }"),
                    ],
                ),
                file("a/util/Helper.java", vec![method("help", "help()", "{}")]),
                file("b/util/Helper.java", vec![method("assist", "assist(int)", "{}")]),
            ],
        )
    }

    fn shortlist(paths: &[&str]) -> Shortlist {
        Shortlist {
            entries: paths.iter().map(|p| ShortlistEntry { fq_path: p.to_string(), score: 0.5 }).collect(),
            k: 50,
        }
    }

    fn args(pairs: &[(&str, &str)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::String(v.to_string()))).collect()
    }

    #[test]
    fn search_file_cascade() {
        let idx = fixture();
        let t = ToolRegistry::new(&idx, None);
        let r = t.search_file("JavaElementLabels.java");
        assert_eq!(r.payload, "org/eclipse/jdt/ui/JavaElementLabels.java");
        assert!(r.note.is_none());
        let r = t.search_file("javaelementlabels.JAVA");
        assert_eq!(r.payload, "org/eclipse/jdt/ui/JavaElementLabels.java");
        assert!(r.note.is_some());
        let r = t.search_file("Labels");
        assert_eq!(r.payload, "org/eclipse/jdt/ui/JavaElementLabels.java\norg/eclipse/jdt/ui/Labels.java");
        let r = t.search_file("Nothing.java");
        assert!(r.ok && r.payload.starts_with("not found"));
    }

    #[test]
    fn search_method_exact_and_fuzzy() {
        let idx = fixture();
        let t = ToolRegistry::new(&idx, None);
        let r = t.search_method("updateLabel");
        assert_eq!(r.payload, "org/eclipse/jdt/ui/JavaElementLabels.java");
        assert!(r.note.is_none());
        let r = t.search_method("updateLable");
        assert!(r.note.as_deref().unwrap().contains("updateLabel"));
        assert!(r.payload.starts_with("updateLabel in "));
        let r = t.search_method("Catalina.start()");
        assert_eq!(r.payload, "org/apache/catalina/startup/Catalina.java");
        assert!(r.note.is_some());
        let empty = CodeIndex::empty("v", "java");
        assert!(ToolRegistry::new(&empty, None).search_method("foo").payload.starts_with("not found"));
    }

    #[test]
    fn candidates_follow_shortlist_and_fail_closed() {
        let idx = fixture();
        let paths: Vec<String> = (0..50).map(|i| format!("p{i:02}.java")).collect();
        let refs: Vec<&str> = paths.iter().map(String::as_str).collect();
        let sl = shortlist(&refs);
        let r = ToolRegistry::new(&idx, Some(&sl)).get_candidate_filenames();
        assert_eq!(r.payload.lines().collect::<Vec<_>>(), refs);
        assert!(!r.payload.contains("0.5"));
        let small = shortlist(&["a", "b", "c"]);
        assert_eq!(ToolRegistry::new(&idx, Some(&small)).get_candidate_filenames().payload.lines().count(), 3);
        let none = ToolRegistry::new(&idx, None);
        assert!(!none.enabled().contains(&ToolName::GetCandidateFilenames));
        let r = none.dispatch("get_candidate_filenames", &BTreeMap::new());
        assert!(!r.ok && r.payload.contains("tool unavailable"));
    }

    #[test]
    fn signatures_with_basename_fallback() {
        let idx = fixture();
        let t = ToolRegistry::new(&idx, None);
        let r = t.get_method_signatures_of_a_file("org/apache/catalina/startup/Catalina.java");
        assert_eq!(r.payload, "start()\nstop()\nload(String[])\nload()");
        let r = t.get_method_signatures_of_a_file("wrong/pkg/Catalina.java");
        assert!(r.note.is_some());
        assert!(r.payload.contains("start()"));
        let r = t.get_method_signatures_of_a_file("x/Helper.java");
        assert!(r.payload.contains("a/util/Helper.java") && r.payload.contains("b/util/Helper.java"));
        assert!(t.get_method_signatures_of_a_file("Missing.java").payload.starts_with("not found"));
    }

    #[test]
    fn method_bodies() {
        let idx = fixture();
        let t = ToolRegistry::new(&idx, None);
        let cat = "org/apache/catalina/startup/Catalina.java";
        let r = t.get_method_body(Some(cat), "start");
        assert_eq!(r.payload, "// start()\n{ server.start(); }");
        assert!(r.note.is_none());
        let r = t.get_method_body(Some(cat), "strat");
        assert!(r.payload.contains("{ server.start(); }"));
        assert!(r.note.as_deref().unwrap().contains("fuzzy"));
        let r = t.get_method_body(Some(cat), "initializeEverything");
        assert!(r.payload.starts_with("not found") && r.payload.contains("stop()"));
        let r = t.get_method_body(Some(cat), "load");
        assert!(r.payload.contains("// load(String[])") && r.payload.contains("// load()"));
        let r = t.get_method_body(None, "updateLabel");
        assert!(r.payload.contains("JavaElementLabels.java :: updateLabel()"));
        assert!(r.note.is_some());
    }

    #[test]
    fn dispatch_is_total() {
        let idx = fixture();
        let t = ToolRegistry::new(&idx, None);
        assert!(!t.dispatch("rm_rf", &BTreeMap::new()).ok);
        assert!(!t.dispatch("search_file", &BTreeMap::new()).ok);
        assert!(!t.dispatch("search_file", &[("name".to_string(), json!(3))].into()).ok);
        assert!(t.dispatch("search_file", &args(&[("name", "Labels.java")])).ok);
        let only = t.clone().restrict(&[ToolName::SearchFile].into());
        assert!(!only.dispatch("search_method", &args(&[("name", "x")])).ok);
        assert_eq!(only.schemas().len(), 1);
    }

    #[test]
    fn method_name_cleanup() {
        assert_eq!(clean_method_name("zoomOut"), ("zoomOut", false));
        assert_eq!(clean_method_name("AutoScale.zoomOut()"), ("zoomOut", true));
        assert_eq!(clean_method_name("Foo#bar(int x)"), ("bar", true));
        assert_eq!(clean_method_name("()"), ("()", false));
    }
}
