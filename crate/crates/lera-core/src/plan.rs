//! The plan grammar.
//!
//! Plans are newline-separated actions of the form `verb(arg)` or
//! `put(arg_a, arg_b)`. The parser tolerates surrounding whitespace, blank
//! lines, and per-line numeric prefixes such as `1.` or `2)`, because chat
//! backends like to number their steps. Everything else is rejected with a
//! line-numbered error so a bad reply can be quoted back to the backend.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::{Family, InvalidNameError, ObjectId};

/// Hard cap on plan length; longer replies are rejected at parse time.
pub const MAX_PLAN_LEN: usize = 64;

/// Marker emitted when serializing an empty plan, accepted when parsing.
pub const DONE_MARKER: &str = "<done>";

/// Every verb the simulator understands, across both task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Locate,
    Goto,
    Pick,
    Place,
    Open,
    Close,
    Put,
    ToggleOn,
    ToggleOff,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::Locate,
        Verb::Goto,
        Verb::Pick,
        Verb::Place,
        Verb::Open,
        Verb::Close,
        Verb::Put,
        Verb::ToggleOn,
        Verb::ToggleOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Locate => "locate",
            Verb::Goto => "goto",
            Verb::Pick => "pick",
            Verb::Place => "place",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::Put => "put",
            Verb::ToggleOn => "toggle_on",
            Verb::ToggleOff => "toggle_off",
        }
    }

    pub fn parse(token: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.as_str() == token)
    }

    /// Number of arguments the verb takes. Only `put` is binary.
    pub fn arity(self) -> usize {
        if self == Verb::Put { 2 } else { 1 }
    }

    /// One-line usage note, rendered into replanning prompts.
    pub fn description(self) -> &'static str {
        match self {
            Verb::Locate => "aim the camera at x so it can be manipulated next",
            Verb::Goto => "move to x so it can be manipulated next",
            Verb::Pick => "grasp x; needs an empty gripper and x located",
            Verb::Place => "release the held object into bowl x or onto block x; needs x located",
            Verb::Open => "open x; needs x closed and located",
            Verb::Close => "close x; needs x open and located",
            Verb::Put => "release held x into y; needs y open and located",
            Verb::ToggleOn => "start appliance x; needs x closed and not running",
            Verb::ToggleOff => "stop appliance x; needs x running",
        }
    }

    fn signature(self) -> String {
        if self.arity() == 2 {
            format!("{self}(x, y)")
        } else {
            format!("{self}(x)")
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One plan step: a verb applied to object arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub verb: Verb,
    pub args: Vec<ObjectId>,
}

impl Action {
    pub fn unary(verb: Verb, arg: ObjectId) -> Action {
        debug_assert_eq!(verb.arity(), 1);
        Action { verb, args: vec![arg] }
    }

    pub fn put(item: ObjectId, target: ObjectId) -> Action {
        Action { verb: Verb::Put, args: vec![item, target] }
    }

    /// First argument. Every verb has at least one.
    pub fn arg(&self) -> &ObjectId {
        &self.args[0]
    }

    /// Last argument: the target of `put`, otherwise the sole argument.
    pub fn target(&self) -> &ObjectId {
        self.args.last().expect("actions have at least one argument")
    }

    /// Parses a single action line (with the same tolerances as [`Plan::parse`]).
    pub fn parse(line: &str) -> Result<Action, ParseError> {
        let trimmed = strip_number_prefix(line.trim());
        parse_line(trimmed, 1)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.verb)?;
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{arg}")?;
        }
        f.write_str(")")
    }
}

/// An ordered list of actions plus an execution cursor.
///
/// The cursor marks the next action to run; serialization always emits the
/// remaining suffix, which is what replanning prompts and adopted plans use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    actions: Vec<Action>,
    cursor: usize,
}

impl Plan {
    /// Builds a plan from already-validated actions.
    ///
    /// Panics if the list exceeds [`MAX_PLAN_LEN`]; callers constructing
    /// plans in code own that bound, while text input goes through
    /// [`Plan::parse`] which reports the violation as an error.
    pub fn from_actions(actions: Vec<Action>) -> Plan {
        assert!(
            actions.len() <= MAX_PLAN_LEN,
            "plan of {} actions exceeds the cap of {MAX_PLAN_LEN}",
            actions.len()
        );
        Plan { actions, cursor: 0 }
    }

    pub fn empty() -> Plan {
        Plan { actions: Vec::new(), cursor: 0 }
    }

    /// Parses plan text. Blank lines are skipped, `1.`/`1)` prefixes are
    /// stripped, and a lone [`DONE_MARKER`] denotes the empty plan.
    pub fn parse(text: &str) -> Result<Plan, ParseError> {
        let mut actions = Vec::new();
        let mut done_line: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let number = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let line = strip_number_prefix(line);
            if line == DONE_MARKER {
                if done_line.is_some() || !actions.is_empty() {
                    return Err(ParseError::StrayDoneMarker { line: number });
                }
                done_line = Some(number);
                continue;
            }
            if let Some(marker) = done_line {
                return Err(ParseError::StrayDoneMarker { line: marker });
            }
            if actions.len() == MAX_PLAN_LEN {
                return Err(ParseError::TooLong { line: number });
            }
            actions.push(parse_line(line, number)?);
        }
        if actions.is_empty() && done_line.is_none() {
            return Err(ParseError::Empty);
        }
        Ok(Plan { actions, cursor: 0 })
    }

    /// Renders the remaining suffix, one action per line, or the done marker.
    pub fn serialize(&self) -> String {
        let rest = &self.actions[self.cursor..];
        if rest.is_empty() {
            return format!("{DONE_MARKER}\n");
        }
        let mut out = String::new();
        for action in rest {
            out.push_str(&action.to_string());
            out.push('\n');
        }
        out
    }

    /// The remaining suffix as a fresh plan with the cursor reset.
    pub fn remaining(&self) -> Plan {
        Plan {
            actions: self.actions[self.cursor..].to_vec(),
            cursor: 0,
        }
    }

    /// The next action to execute, if any.
    pub fn current(&self) -> Option<&Action> {
        self.actions.get(self.cursor)
    }

    pub fn advance(&mut self) {
        if self.cursor < self.actions.len() {
            self.cursor += 1;
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// True when the cursor has passed the last action.
    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.actions.len()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Actions still to be executed.
    pub fn remaining_actions(&self) -> &[Action] {
        &self.actions[self.cursor..]
    }

    /// Checks every action against an action vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), ValidationError> {
        for (index, action) in self.actions.iter().enumerate() {
            if !vocab.allows_verb(action.verb) {
                return Err(ValidationError::VerbNotAllowed {
                    index,
                    verb: action.verb,
                    family: vocab.family,
                });
            }
            for arg in &action.args {
                if !vocab.knows_object(arg) {
                    return Err(ValidationError::UnknownObject {
                        index,
                        object: arg.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn strip_number_prefix(line: &str) -> &str {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return line;
    }
    let rest = &line[digits..];
    match rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
        Some(stripped) => stripped.trim_start(),
        None => line,
    }
}

fn parse_line(line: &str, number: usize) -> Result<Action, ParseError> {
    let malformed = || ParseError::Malformed {
        line: number,
        text: line.to_string(),
    };
    let open = line.find('(').ok_or_else(malformed)?;
    if !line.ends_with(')') || open + 1 > line.len() - 1 {
        return Err(malformed());
    }
    let verb_token = line[..open].trim();
    if verb_token.is_empty() {
        return Err(malformed());
    }
    let verb = Verb::parse(verb_token).ok_or_else(|| ParseError::UnknownVerb {
        line: number,
        verb: verb_token.to_string(),
    })?;
    let inner = &line[open + 1..line.len() - 1];
    let tokens: Vec<&str> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    if tokens.len() != verb.arity() {
        return Err(ParseError::WrongArity {
            line: number,
            verb,
            expected: verb.arity(),
            found: tokens.len(),
        });
    }
    let mut args = Vec::with_capacity(tokens.len());
    for token in tokens {
        let id = ObjectId::new(token).map_err(|source| ParseError::BadObjectName {
            line: number,
            source,
        })?;
        args.push(id);
    }
    Ok(Action { verb, args })
}

/// A parse failure, tagged with the 1-based offending line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("plan is empty")]
    Empty,
    #[error("line {line}: unknown verb {verb:?}")]
    UnknownVerb { line: usize, verb: String },
    #[error("line {line}: {verb} takes {expected} argument(s), found {found}")]
    WrongArity {
        line: usize,
        verb: Verb,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: malformed action {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: {source}")]
    BadObjectName {
        line: usize,
        source: InvalidNameError,
    },
    #[error("line {line}: plan exceeds {MAX_PLAN_LEN} actions")]
    TooLong { line: usize },
    #[error("line {line}: {DONE_MARKER} must be the only content of a plan")]
    StrayDoneMarker { line: usize },
}

/// The verbs and object names a plan may use for a given task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub family: Family,
    pub verbs: BTreeSet<Verb>,
    pub objects: BTreeSet<ObjectId>,
}

impl Vocabulary {
    pub fn for_family(family: Family, objects: impl IntoIterator<Item = ObjectId>) -> Vocabulary {
        Vocabulary {
            family,
            verbs: family.verbs().iter().copied().collect(),
            objects: objects.into_iter().collect(),
        }
    }

    pub fn allows_verb(&self, verb: Verb) -> bool {
        self.verbs.contains(&verb)
    }

    pub fn knows_object(&self, object: &ObjectId) -> bool {
        self.objects.contains(object)
    }

    /// Renders the vocabulary for a replanning prompt: one line per verb
    /// signature, then the object names.
    pub fn prompt_block(&self) -> String {
        let mut out = String::new();
        for verb in &self.verbs {
            out.push_str(&format!("- {}: {}\n", verb.signature(), verb.description()));
        }
        let names: Vec<&str> = self.objects.iter().map(|o| o.as_str()).collect();
        out.push_str(&format!("Objects: {}.", names.join(", ")));
        out
    }
}

/// A vocabulary violation in an otherwise well-formed plan.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("action {index}: verb {verb} is not available in the {family} family")]
    VerbNotAllowed {
        index: usize,
        verb: Verb,
        family: Family,
    },
    #[error("action {index}: unknown object {object}")]
    UnknownObject { index: usize, object: ObjectId },
}
