//! Flat `key=value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Parsed entries. Commands `take` the keys they understand and then call
/// [`finish`](Config::finish), which rejects anything left over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key=value", n + 1))
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
            }
            if entries
                .insert(key.clone(), (v.trim().to_string(), n + 1))
                .is_some()
            {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key {key}",
                    n + 1
                )));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config line {line}: {key}={v}: {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => parse_list(&v)
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config line {line}: {key}: {e}"))),
        }
    }

    /// Sets `key`, replacing any value from the file.
    pub fn with(mut self, key: &str, value: &str) -> Config {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
        self
    }

    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(CliError::Usage(format!(
                "config line {line}: unknown key {k}"
            ))),
        }
    }
}

pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

/// `true/false`, `yes/no`, `on/off`, `1/0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flag(pub bool);

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(Flag(true)),
            "false" | "no" | "off" | "0" => Ok(Flag(false)),
            _ => Err(format!("expected a boolean, got {s:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_types() {
        let mut c =
            Config::parse("# header\nepochs = 5 # trailing\n\nflag=yes\nsizes=1, 2,3\n").unwrap();
        assert_eq!(c.take::<usize>("epochs").unwrap(), Some(5));
        assert_eq!(c.take::<Flag>("flag").unwrap(), Some(Flag(true)));
        assert_eq!(c.take_list::<usize>("sizes").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(c.take_or("missing", 7usize).unwrap(), 7);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("=3\n").is_err());
        assert!(Config::parse("a=1\na=2\n").is_err());
        let mut c = Config::parse("a=x\nb=1\n").unwrap();
        assert!(c.take::<u32>("a").is_err());
        assert!(c.finish().is_err());
    }
}
