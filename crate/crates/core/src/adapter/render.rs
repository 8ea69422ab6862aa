//! Turning settings into command lines.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::{AdapterError, AnalyzerProfile, ProgramRef};
use crate::lattice::{Extended, ParamSpec, ParamType, ParamValue, Profile, Setting};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgStyle {
    /// `-flag value`
    #[default]
    Separate,
    /// `-flag=value`
    Equals,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptySet {
    /// Leave the flag out entirely.
    #[default]
    Omit,
    /// Pass the flag with an empty value.
    EmptyString,
}

fn comma() -> String {
    ",".to_string()
}

/// How one parameter appears on the command line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RenderRule {
    /// Integer literal, enum label, or `true`/`false`.
    Value {
        flag: String,
        #[serde(default)]
        style: ArgStyle,
    },
    /// Selected string-set members joined by `separator`.
    Set {
        flag: String,
        #[serde(default = "comma")]
        separator: String,
        #[serde(default)]
        style: ArgStyle,
        #[serde(default)]
        empty: EmptySet,
    },
    /// Presence/absence flags for a boolean or a two-label enum.
    Switch {
        #[serde(default)]
        on: Option<String>,
        #[serde(default)]
        off: Option<String>,
    },
}

impl RenderRule {
    pub(crate) fn check_against(&self, spec: &ParamSpec) -> Result<(), AdapterError> {
        let ok = match (self, &spec.ptype) {
            (RenderRule::Value { .. }, ParamType::StringSet { .. }) => false,
            (RenderRule::Value { .. }, _) => true,
            (RenderRule::Set { .. }, ParamType::StringSet { .. }) => true,
            (RenderRule::Switch { .. }, ParamType::Boolean) => true,
            (RenderRule::Switch { .. }, ParamType::OrderedEnum { labels }) => labels.len() == 2,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(AdapterError::RuleMismatch {
                name: spec.name.clone(),
                kind: spec.ptype.kind_name(),
            })
        }
    }

    fn push_flag(flag: &str, style: ArgStyle, value: String, out: &mut Vec<String>) {
        match style {
            ArgStyle::Separate => {
                out.push(flag.to_string());
                out.push(value);
            }
            ArgStyle::Equals => out.push(format!("{flag}={value}")),
        }
    }

    fn render(&self, spec: &ParamSpec, v: &ParamValue, out: &mut Vec<String>) -> Result<(), AdapterError> {
        match (self, v, &spec.ptype) {
            (_, ParamValue::Int(Extended::Infinity), _) => {
                return Err(AdapterError::InfinityNotRenderable(spec.name.clone()));
            }
            (RenderRule::Value { flag, style }, ParamValue::Int(Extended::Finite(n)), _) => {
                Self::push_flag(flag, *style, n.to_string(), out)
            }
            (RenderRule::Value { flag, style }, ParamValue::Bool(b), _) => {
                Self::push_flag(flag, *style, b.to_string(), out)
            }
            (RenderRule::Value { flag, style }, ParamValue::Enum(i), ParamType::OrderedEnum { labels }) => {
                Self::push_flag(flag, *style, labels[*i].clone(), out)
            }
            (
                RenderRule::Set {
                    flag,
                    separator,
                    style,
                    empty,
                },
                ParamValue::Bits(bits),
                ParamType::StringSet { members },
            ) => {
                let selected: Vec<&str> = members
                    .iter()
                    .zip(bits.bits())
                    .filter(|(_, b)| **b)
                    .map(|(m, _)| m.as_str())
                    .collect();
                if !selected.is_empty() || *empty == EmptySet::EmptyString {
                    Self::push_flag(flag, *style, selected.join(separator), out);
                }
            }
            (RenderRule::Switch { on, off }, ParamValue::Bool(b), _) => {
                if let Some(f) = if *b { on } else { off } {
                    out.push(f.clone());
                }
            }
            (RenderRule::Switch { on, off }, ParamValue::Enum(i), _) => {
                if let Some(f) = if *i == 1 { on } else { off } {
                    out.push(f.clone());
                }
            }
            _ => {
                return Err(AdapterError::RuleMismatch {
                    name: spec.name.clone(),
                    kind: spec.ptype.kind_name(),
                })
            }
        }
        Ok(())
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_]+)\}").expect("static regex"))
}

/// Names accepted inside `{...}` in command templates. `{program}` and
/// `{params}` must stand alone as a whole argument since they expand to
/// several arguments.
pub const PLACEHOLDERS: [&str; 3] = ["program", "params", "program_id"];

pub(crate) fn check_template(command: &[String]) -> Result<(), AdapterError> {
    if command.is_empty() {
        return Err(AdapterError::EmptyCommand);
    }
    for arg in command {
        for cap in placeholder_re().captures_iter(arg) {
            let name = &cap[1];
            if !PLACEHOLDERS.contains(&name) {
                return Err(AdapterError::UnknownPlaceholder(name.to_string()));
            }
            if (name == "program" || name == "params") && arg != &format!("{{{name}}}") {
                return Err(AdapterError::EmbeddedListPlaceholder(name.to_string()));
            }
        }
    }
    Ok(())
}

/// Parameter arguments only, in profile order.
pub fn render_params(profile: &AnalyzerProfile, params: &Profile, p: &Setting) -> Result<Vec<String>, AdapterError> {
    params.check(p)?;
    let mut out = Vec::new();
    for (spec, v) in params.specs().iter().zip(p.values()) {
        let rule = profile
            .renderings
            .get(&spec.name)
            .ok_or_else(|| AdapterError::MissingRendering(spec.name.clone()))?;
        rule.render(spec, v, &mut out)?;
    }
    Ok(out)
}

/// Full argument vector (program first) for analyzing `prog` under `p`.
pub fn render_command(
    profile: &AnalyzerProfile,
    params: &Profile,
    prog: &ProgramRef,
    p: &Setting,
) -> Result<Vec<String>, AdapterError> {
    check_template(&profile.command)?;
    let param_args = render_params(profile, params, p)?;
    let mut argv = Vec::new();
    for arg in &profile.command {
        match arg.as_str() {
            "{program}" => argv.extend(prog.sources.iter().cloned()),
            "{params}" => argv.extend(param_args.iter().cloned()),
            _ => argv.push(arg.replace("{program_id}", &prog.id)),
        }
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::ExtractionRule;
    use std::collections::BTreeMap;

    fn eva_like() -> (AnalyzerProfile, Profile) {
        let params = Profile::new(vec![
            ParamSpec::integer("auto-loop-unroll"),
            ParamSpec::string_set(
                "domains",
                &["cvalue", "octagon", "equality", "gauges", "symbolic-locations"],
            ),
            ParamSpec::boolean("octagon-through-calls"),
            ParamSpec::ordered_enum("equality-through-calls", &["none", "formals"]),
        ])
        .unwrap();
        let mut renderings = BTreeMap::new();
        renderings.insert(
            "auto-loop-unroll".to_string(),
            RenderRule::Value {
                flag: "-eva-auto-loop-unroll".into(),
                style: ArgStyle::Separate,
            },
        );
        renderings.insert(
            "domains".to_string(),
            RenderRule::Set {
                flag: "-eva-domains".into(),
                separator: ",".into(),
                style: ArgStyle::Separate,
                empty: EmptySet::Omit,
            },
        );
        renderings.insert(
            "octagon-through-calls".to_string(),
            RenderRule::Switch {
                on: Some("-eva-octagon-through-calls".into()),
                off: Some("-eva-no-octagon-through-calls".into()),
            },
        );
        renderings.insert(
            "equality-through-calls".to_string(),
            RenderRule::Value {
                flag: "-eva-equality-through-calls".into(),
                style: ArgStyle::Equals,
            },
        );
        let profile = AnalyzerProfile {
            command: vec!["frama-c".into(), "{program}".into(), "-eva".into(), "{params}".into()],
            renderings,
            workdir: None,
            env: BTreeMap::new(),
            extraction: ExtractionRule::regex_lines(r"(assert .*;)"),
            timeout_grace_seconds: 1.0,
            accepted_exit_codes: vec![0],
        };
        (profile, params)
    }

    fn prog() -> ProgramRef {
        ProgramRef {
            id: "demo".into(),
            sources: vec!["a.c".into(), "b.c".into()],
        }
    }

    #[test]
    fn renders_command_shape() {
        let (profile, params) = eva_like();
        let p = Setting::new(vec![
            ParamValue::int(4),
            ParamValue::bits("11010"),
            ParamValue::Bool(false),
            ParamValue::Enum(1),
        ]);
        let argv = render_command(&profile, &params, &prog(), &p).unwrap();
        assert_eq!(
            argv,
            [
                "frama-c",
                "a.c",
                "b.c",
                "-eva",
                "-eva-auto-loop-unroll",
                "4",
                "-eva-domains",
                "cvalue,octagon,gauges",
                "-eva-no-octagon-through-calls",
                "-eva-equality-through-calls=formals",
            ]
        );
        let joined = argv.join(" ");
        assert!(joined.contains("-eva-auto-loop-unroll 4"));
        assert!(joined.contains("-eva-domains cvalue,octagon,gauges"));
    }

    #[test]
    fn empty_set_rules() {
        let (mut profile, params) = eva_like();
        let p = Setting::new(vec![
            ParamValue::int(0),
            ParamValue::bits("00000"),
            ParamValue::Bool(true),
            ParamValue::Enum(0),
        ]);
        let argv = render_params(&profile, &params, &p).unwrap();
        assert!(!argv.iter().any(|a| a == "-eva-domains"));
        if let Some(RenderRule::Set { empty, .. }) = profile.renderings.get_mut("domains") {
            *empty = EmptySet::EmptyString;
        }
        let argv = render_params(&profile, &params, &p).unwrap();
        let i = argv.iter().position(|a| a == "-eva-domains").unwrap();
        assert_eq!(argv[i + 1], "");
    }

    #[test]
    fn infinity_and_placeholders_are_errors() {
        let (mut profile, params) = eva_like();
        let p = Setting::new(vec![
            ParamValue::INFINITY,
            ParamValue::bits("10000"),
            ParamValue::Bool(false),
            ParamValue::Enum(0),
        ]);
        assert!(matches!(
            render_command(&profile, &params, &prog(), &p),
            Err(AdapterError::InfinityNotRenderable(_))
        ));
        profile.command.push("{bogus}".into());
        let ok = Setting::new(vec![
            ParamValue::int(1),
            ParamValue::bits("10000"),
            ParamValue::Bool(false),
            ParamValue::Enum(0),
        ]);
        assert!(matches!(
            render_command(&profile, &params, &prog(), &ok),
            Err(AdapterError::UnknownPlaceholder(_))
        ));
        assert!(matches!(
            check_template(&["x".into(), "--in={program}".into()]),
            Err(AdapterError::EmbeddedListPlaceholder(_))
        ));
        assert!(check_template(&["x".into(), "--id={program_id}".into()]).is_ok());
    }
}
