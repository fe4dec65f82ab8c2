//! Graph definition file.
//!
//! ```text
//! # comment
//! node B Bijoy_Sarani 23.7639 90.3889
//! node C Farmgate
//! edge B C 500 false
//! edge A B 300 true
//! ```
//!
//! `node <id> <label...> [lat lon]`: the label is every token between the id
//! and an optional trailing coordinate pair. `edge <from> <to> <length_m>
//! <one_way>` with `one_way` one of `true`/`false`/`1`/`0`.

use std::fmt::Write as _;

use super::{CameraNode, GraphError};

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSpec {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub one_way: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphDefinition {
    pub nodes: Vec<CameraNode>,
    pub roads: Vec<RoadSpec>,
}

pub fn parse_graph_definition(text: &str) -> Result<GraphDefinition, GraphError> {
    let mut def = GraphDefinition::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| GraphError::Definition {
            line: i + 1,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "node" => {
                if tokens.len() < 2 {
                    return Err(err("node needs an id".into()));
                }
                let id = tokens[1].to_string();
                let mut rest = &tokens[2..];
                let mut coords = None;
                if rest.len() >= 2 {
                    let (lat, lon) = (rest[rest.len() - 2], rest[rest.len() - 1]);
                    if let (Ok(lat), Ok(lon)) = (lat.parse::<f64>(), lon.parse::<f64>()) {
                        coords = Some((lat, lon));
                        rest = &rest[..rest.len() - 2];
                    }
                }
                let label = if rest.is_empty() {
                    id.clone()
                } else {
                    rest.join(" ")
                };
                def.nodes.push(CameraNode { id, label, coords });
            }
            "edge" => {
                if tokens.len() != 5 {
                    return Err(err(format!(
                        "edge needs `from to length one_way`, got {} fields",
                        tokens.len() - 1
                    )));
                }
                let length_m: f64 = tokens[3]
                    .parse()
                    .map_err(|_| err(format!("bad length {:?}", tokens[3])))?;
                let one_way = match tokens[4].to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" | "oneway" => true,
                    "false" | "0" | "no" | "twoway" => false,
                    other => return Err(err(format!("bad one_way flag {other:?}"))),
                };
                def.roads.push(RoadSpec {
                    from: tokens[1].to_string(),
                    to: tokens[2].to_string(),
                    length_m,
                    one_way,
                });
            }
            other => return Err(err(format!("unknown record type {other:?}"))),
        }
    }
    Ok(def)
}

pub fn write_graph_definition(def: &GraphDefinition) -> String {
    let mut out = String::new();
    for n in &def.nodes {
        let _ = write!(out, "node {} {}", n.id, n.label);
        if let Some((lat, lon)) = n.coords {
            let _ = write!(out, " {lat} {lon}");
        }
        out.push('\n');
    }
    for r in &def.roads {
        let _ = writeln!(out, "edge {} {} {} {}", r.from, r.to, r.length_m, r.one_way);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sample() {
        let def = parse_graph_definition(
            "# city\nnode B Bijoy Sarani 23.7639 90.3889\nnode C Farmgate\n\nedge B C 500 false\nedge C B2 1 1 # odd\n",
        )
        .unwrap();
        assert_eq!(def.nodes.len(), 2);
        assert_eq!(def.nodes[0].label, "Bijoy Sarani");
        assert_eq!(def.nodes[0].coords, Some((23.7639, 90.3889)));
        assert_eq!(def.nodes[1].coords, None);
        assert!(!def.roads[0].one_way);
        assert!(def.roads[1].one_way);
        let again = parse_graph_definition(&write_graph_definition(&def)).unwrap();
        assert_eq!(again, def);
    }

    #[test]
    fn bad_lines() {
        assert!(matches!(
            parse_graph_definition("node A\nedge A B x true"),
            Err(GraphError::Definition { line: 2, .. })
        ));
        assert!(parse_graph_definition("edge A B 1").is_err());
        assert!(parse_graph_definition("edge A B 1 maybe").is_err());
        assert!(parse_graph_definition("vertex A").is_err());
    }
}
