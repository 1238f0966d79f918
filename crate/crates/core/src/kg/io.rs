//! Triple TSV and schema files.
//!
//! Schema lines are tab-separated records:
//! `relation <label> <domain> <range> <functional:true|false> <family>` or
//! `entity <label> <type>`. Entity records are optional; undeclared entities
//! take their type from the first relation that mentions them. Blank lines
//! and lines starting with `#` are ignored in both files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Entity, EntityId, EntityType, KnowledgeGraph, RelationId, RelationType, Triple};
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

/// Relation schema and declared entities parsed from a schema file.
pub fn parse_schema(text: &str, path: &str) -> Result<(Vec<RelationType>, Vec<(String, EntityType)>)> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
    let ty = |line: usize, s: &str| EntityType::parse(s).ok_or_else(|| perr(line, format!("unknown entity type `{s}`")));
    let mut rels = Vec::new();
    let mut ents = Vec::new();
    for (line, f) in records(text) {
        match f.first().copied() {
            Some("relation") => {
                if f.len() != 6 {
                    return Err(perr(line, format!("relation record needs 6 fields, found {}", f.len())));
                }
                let functional = match f[4] {
                    "true" => true,
                    "false" => false,
                    other => return Err(perr(line, format!("functional flag must be true or false, found `{other}`"))),
                };
                rels.push(RelationType {
                    id: format!("R{:02}", rels.len()),
                    label: f[1].to_string(),
                    domain_type: ty(line, f[2])?,
                    range_type: ty(line, f[3])?,
                    functional,
                    family: f[5].to_string(),
                });
            }
            Some("entity") => {
                if f.len() != 3 {
                    return Err(perr(line, format!("entity record needs 3 fields, found {}", f.len())));
                }
                ents.push((f[1].to_string(), ty(line, f[2])?));
            }
            other => return Err(perr(line, format!("unknown record kind `{}`", other.unwrap_or("")))),
        }
    }
    Ok((rels, ents))
}

/// Build a graph from TSV text; returns the graph and the number of duplicate lines dropped.
pub fn parse_triples(tsv: &str, tsv_path: &str, schema: &str, schema_path: &str) -> Result<(KnowledgeGraph, usize)> {
    let (relations, declared) = parse_schema(schema, schema_path)?;
    let rel_index: HashMap<&str, usize> = relations.iter().enumerate().map(|(i, r)| (r.label.as_str(), i)).collect();
    let mut entities: Vec<Entity> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (label, ty) in declared {
        if index.contains_key(&label) {
            return Err(Error::Config(format!("entity `{label}` declared twice")));
        }
        index.insert(label.clone(), entities.len());
        entities.push(Entity { id: format!("E{:04}", entities.len()), label, entity_type: ty });
    }
    let mut triples = Vec::new();
    for (line, f) in records(tsv) {
        let perr = |msg: String| Error::Parse { path: tsv_path.to_string(), line, msg };
        if f.len() != 3 {
            return Err(perr(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let &ri = rel_index.get(f[1]).ok_or_else(|| perr(format!("unknown relation `{}`", f[1])))?;
        let rel = &relations[ri];
        let mut ent = |label: &str, ty: EntityType| -> Result<usize> {
            if let Some(&i) = index.get(label) {
                let have = entities[i].entity_type;
                if have != ty {
                    return Err(Error::Typing {
                        head: f[0].to_string(),
                        relation: f[1].to_string(),
                        tail: f[2].to_string(),
                        msg: format!("line {line}: `{label}` is a {have} but the relation expects {ty}"),
                    });
                }
                return Ok(i);
            }
            index.insert(label.to_string(), entities.len());
            entities.push(Entity { id: format!("E{:04}", entities.len()), label: label.to_string(), entity_type: ty });
            Ok(entities.len() - 1)
        };
        let h = ent(f[0], rel.domain_type)?;
        let t = ent(f[2], rel.range_type)?;
        triples.push(Triple { head: EntityId(h as u32), relation: RelationId(ri as u32), tail: EntityId(t as u32) });
    }
    KnowledgeGraph::new(entities, relations, triples)
}

/// Load a graph from a triple TSV and a schema file.
pub fn load_triples(path: &Path, schema_path: &Path) -> Result<(KnowledgeGraph, usize)> {
    let tsv = read(path)?;
    let schema = read(schema_path)?;
    parse_triples(&tsv, &path.display().to_string(), &schema, &schema_path.display().to_string())
}

pub fn triples_tsv(g: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for t in g.triples() {
        let _ = writeln!(s, "{}\t{}\t{}", g.label(t.head), g.relation(t.relation).label, g.label(t.tail));
    }
    s
}

pub fn schema_text(g: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for r in g.relations() {
        let _ = writeln!(s, "relation\t{}\t{}\t{}\t{}\t{}", r.label, r.domain_type, r.range_type, r.functional, r.family);
    }
    for e in g.entities() {
        let _ = writeln!(s, "entity\t{}\t{}", e.label, e.entity_type);
    }
    s
}

/// Write `triples.tsv` and `schema.tsv` into `dir`.
pub fn dump_world(g: &KnowledgeGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tp = dir.join("triples.tsv");
    std::fs::write(&tp, triples_tsv(g)).map_err(|e| Error::io(&tp, e))?;
    let sp = dir.join("schema.tsv");
    std::fs::write(&sp, schema_text(g)).map_err(|e| Error::io(&sp, e))?;
    Ok(())
}

pub fn load_world(dir: &Path) -> Result<KnowledgeGraph> {
    Ok(load_triples(&dir.join("triples.tsv"), &dir.join("schema.tsv"))?.0)
}
