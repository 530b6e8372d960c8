use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    #[default]
    Chunked,
    Sliding,
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Chunked => "chunked",
            WindowMode::Sliding => "sliding",
        })
    }
}

impl FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chunked" => Ok(WindowMode::Chunked),
            "sliding" => Ok(WindowMode::Sliding),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

/// A model call over `start..end` that scores `score_from..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub score_from: usize,
}

impl Window {
    pub fn context_len(&self) -> usize {
        self.score_from - self.start
    }

    pub fn scored(&self) -> std::ops::Range<usize> {
        self.score_from..self.end
    }
}

/// Chunked mode cuts disjoint windows of `context`; sliding mode scores a
/// full first window, then advances by `step`, scoring the newest `step`
/// positions behind `context - step` positions of context.
pub fn make_windows(n: usize, mode: WindowMode, context: usize, step: usize) -> Result<Vec<Window>> {
    if n == 0 {
        return Err(Error::InvalidConfig("cannot window an empty sequence".into()));
    }
    if context == 0 {
        return Err(Error::InvalidConfig("context size must be positive".into()));
    }
    let step = match mode {
        WindowMode::Chunked => context,
        WindowMode::Sliding => step,
    };
    if step == 0 || step > context {
        return Err(Error::InvalidConfig(format!(
            "step {step} must lie in 1..={context}"
        )));
    }
    let first_end = context.min(n);
    let mut windows = vec![Window {
        start: 0,
        end: first_end,
        score_from: 0,
    }];
    let mut from = first_end;
    while from < n {
        let end = (from + step).min(n);
        windows.push(Window {
            start: from - (context - step),
            end,
            score_from: from,
        });
        from = end;
    }
    Ok(windows)
}
