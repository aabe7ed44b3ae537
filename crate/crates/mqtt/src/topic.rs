use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopicError {
    #[error("invalid topic filter {0:?}")]
    InvalidFilter(String),
    #[error("invalid topic name {0:?}")]
    InvalidTopic(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Level {
    Literal(String),
    /// `+`
    Single,
    /// `#`, always the last level
    Multi,
}

/// A validated subscription filter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicFilter {
    raw: String,
    levels: Vec<Level>,
}

impl TopicFilter {
    pub fn parse(filter: &str) -> Result<Self, TopicError> {
        let invalid = || TopicError::InvalidFilter(filter.to_string());
        if filter.is_empty() || filter.contains('\0') {
            return Err(invalid());
        }
        let parts: Vec<&str> = filter.split('/').collect();
        let mut levels = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let level = match *part {
                "#" if i + 1 == parts.len() => Level::Multi,
                "+" => Level::Single,
                p if p.contains(['+', '#']) => return Err(invalid()),
                p => Level::Literal(p.to_string()),
            };
            if level == Level::Multi && i + 1 != parts.len() {
                return Err(invalid());
            }
            levels.push(level);
        }
        Ok(Self {
            raw: filter.to_string(),
            levels,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// MQTT 3.1.1 matching. Filters starting with a wildcard do not match
    /// topics starting with `$`.
    pub fn matches(&self, topic: &str) -> bool {
        if topic.starts_with('$') && matches!(self.levels[0], Level::Single | Level::Multi) {
            return false;
        }
        let mut names = topic.split('/');
        for level in &self.levels {
            match level {
                Level::Multi => return true,
                Level::Single => {
                    if names.next().is_none() {
                        return false;
                    }
                }
                Level::Literal(lit) => {
                    if names.next() != Some(lit.as_str()) {
                        return false;
                    }
                }
            }
        }
        names.next().is_none()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

pub fn validate_topic_name(topic: &str) -> Result<(), TopicError> {
    if topic.is_empty() || topic.contains(['+', '#', '\0']) || topic.len() > usize::from(u16::MAX) {
        Err(TopicError::InvalidTopic(topic.to_string()))
    } else {
        Ok(())
    }
}

pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, TopicError> {
    validate_topic_name(topic)?;
    Ok(TopicFilter::parse(filter)?.matches(topic))
}
