//! Run configuration files (TOML, unknown keys rejected).

use std::path::Path;

use rpg_core::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

/// 1-based line of byte offset `at`.
fn line_of(text: &str, at: usize) -> usize {
    text[..at.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// First line assigning `key`, 1-based.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Parses and validates a configuration document. Errors carry the line
/// they refer to when one can be located.
pub fn parse_config(text: &str) -> Result<TrainConfig, String> {
    let cfg: TrainConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().trim().to_string();
        match e.span() {
            Some(span) => format!("line {}: {message}", line_of(text, span.start)),
            None => message,
        }
    })?;
    cfg.validate().map_err(|e| {
        let message = match e {
            rpg_core::Error::InvalidConfig(m) => m,
            other => other.to_string(),
        };
        let key = message.split_whitespace().next().unwrap_or("");
        match line_of_key(text, key) {
            Some(line) => format!("line {line}: {message}"),
            None => message,
        }
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CliResult<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text).map_err(|message| CliError::Config { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rpg_core::trainer::Variant;

    #[test]
    fn defaults_from_empty_document() {
        assert_eq!(parse_config("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn nested_sections() {
        let cfg = parse_config("variant = \"T\"\nlr = 0.1\n[env]\nkind = \"landscape\"\nfunction = \"quadratic\"\ndim = 4\n[metric_train.adam]\nlr = 0.01\n").unwrap();
        assert_eq!(cfg.variant, Variant::T);
        assert_eq!(cfg.metric_train.adam.lr, 0.01);
    }

    #[test]
    fn invalid_gamma_names_field_and_line() {
        let err = parse_config("seed = 3\ngamma = 1.5\n").unwrap_err();
        assert!(err.starts_with("line 2:") && err.contains("gamma"), "{err}");
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let err = parse_config("seed = 3\n\n[metric]\nwidth = 3\n").unwrap_err();
        assert!(err.starts_with("line 4:") && err.contains("width"), "{err}");
    }

    #[test]
    fn type_errors_are_line_anchored() {
        let err = parse_config("lr = \"fast\"\n").unwrap_err();
        assert!(err.starts_with("line 1:"), "{err}");
    }
}
