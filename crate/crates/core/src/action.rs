//! Action-command grammar: the nine robot commands, text parsing as planners
//! emit it, and canonical rendering.
//!
//! The canonical wire format is one command per line with tokens separated by
//! single spaces, exactly what [`render_command`] produces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Words accepted as optional connectives and therefore not usable as names.
const RESERVED: [&str; 5] = ["from", "on", "in", "into", "onto"];

/// One of the robot's two hands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }

    fn parse(token: &str) -> Option<Hand> {
        match token.to_ascii_lowercase().as_str() {
            "left" => Some(Hand::Left),
            "right" => Some(Hand::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name of an entity in the world. Names are case-sensitive tokens made of
/// ASCII letters, digits, `_` and `-`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid entity name {0:?}")]
pub struct InvalidName(pub String);

impl EntityId {
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidName> {
        let name = name.into();
        if Self::is_valid(&name) {
            Ok(EntityId(name))
        } else {
            Err(InvalidName(name))
        }
    }

    pub fn is_valid(name: &str) -> bool {
        !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            && !RESERVED.iter().any(|r| r.eq_ignore_ascii_case(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = InvalidName;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> String {
        id.0
    }
}

impl FromStr for EntityId {
    type Err = InvalidName;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityId::new(s)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for EntityId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for EntityId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Shorthand used throughout tests and scenario code. Panics on invalid names.
pub fn eid(name: &str) -> EntityId {
    EntityId::new(name).expect("valid entity name")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Get,
    Put,
    Pour,
    OpenDoor,
    CloseDoor,
    Screw,
    Unscrew,
    FingerPush,
    Wait,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::Get,
        Verb::Put,
        Verb::Pour,
        Verb::OpenDoor,
        Verb::CloseDoor,
        Verb::Screw,
        Verb::Unscrew,
        Verb::FingerPush,
        Verb::Wait,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Verb::Get => "get",
            Verb::Put => "put",
            Verb::Pour => "pour",
            Verb::OpenDoor => "open_door",
            Verb::CloseDoor => "close_door",
            Verb::Screw => "screw",
            Verb::Unscrew => "unscrew",
            Verb::FingerPush => "finger_push",
            Verb::Wait => "wait",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Verb> {
        Verb::ALL
            .into_iter()
            .find(|v| v.keyword().eq_ignore_ascii_case(word))
    }
}

/// A single robot command.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ActionCommand {
    Get {
        object: EntityId,
        source: EntityId,
        hand: Option<Hand>,
    },
    Put {
        object: EntityId,
        destination: EntityId,
    },
    Pour {
        source: EntityId,
        destination: EntityId,
        amount: u32,
    },
    OpenDoor { object: EntityId },
    CloseDoor { object: EntityId },
    Screw { object: EntityId },
    Unscrew { object: EntityId },
    FingerPush { object: EntityId },
    Wait { duration: u32 },
}

impl ActionCommand {
    pub fn verb(&self) -> Verb {
        match self {
            ActionCommand::Get { .. } => Verb::Get,
            ActionCommand::Put { .. } => Verb::Put,
            ActionCommand::Pour { .. } => Verb::Pour,
            ActionCommand::OpenDoor { .. } => Verb::OpenDoor,
            ActionCommand::CloseDoor { .. } => Verb::CloseDoor,
            ActionCommand::Screw { .. } => Verb::Screw,
            ActionCommand::Unscrew { .. } => Verb::Unscrew,
            ActionCommand::FingerPush { .. } => Verb::FingerPush,
            ActionCommand::Wait { .. } => Verb::Wait,
        }
    }

    /// The entity the command is primarily about (the manipulated object).
    pub fn primary_object(&self) -> Option<&EntityId> {
        match self {
            ActionCommand::Get { object, .. }
            | ActionCommand::Put { object, .. }
            | ActionCommand::OpenDoor { object }
            | ActionCommand::CloseDoor { object }
            | ActionCommand::Screw { object }
            | ActionCommand::Unscrew { object }
            | ActionCommand::FingerPush { object } => Some(object),
            ActionCommand::Pour { source, .. } => Some(source),
            ActionCommand::Wait { .. } => None,
        }
    }

    /// Every entity named by the command, in argument order.
    pub fn entities(&self) -> Vec<&EntityId> {
        match self {
            ActionCommand::Get { object, source, .. } => vec![object, source],
            ActionCommand::Put {
                object,
                destination,
            } => vec![object, destination],
            ActionCommand::Pour {
                source,
                destination,
                ..
            } => vec![source, destination],
            ActionCommand::OpenDoor { object }
            | ActionCommand::CloseDoor { object }
            | ActionCommand::Screw { object }
            | ActionCommand::Unscrew { object }
            | ActionCommand::FingerPush { object } => vec![object],
            ActionCommand::Wait { .. } => vec![],
        }
    }

    pub fn mentions(&self, id: &EntityId) -> bool {
        self.entities().into_iter().any(|e| e == id)
    }

    /// Rewrites every occurrence of `from` with `to`.
    pub fn rename(&self, from: &EntityId, to: &EntityId) -> ActionCommand {
        let r = |e: &EntityId| if e == from { to.clone() } else { e.clone() };
        match self {
            ActionCommand::Get {
                object,
                source,
                hand,
            } => ActionCommand::Get {
                object: r(object),
                source: r(source),
                hand: *hand,
            },
            ActionCommand::Put {
                object,
                destination,
            } => ActionCommand::Put {
                object: r(object),
                destination: r(destination),
            },
            ActionCommand::Pour {
                source,
                destination,
                amount,
            } => ActionCommand::Pour {
                source: r(source),
                destination: r(destination),
                amount: *amount,
            },
            ActionCommand::OpenDoor { object } => ActionCommand::OpenDoor { object: r(object) },
            ActionCommand::CloseDoor { object } => ActionCommand::CloseDoor { object: r(object) },
            ActionCommand::Screw { object } => ActionCommand::Screw { object: r(object) },
            ActionCommand::Unscrew { object } => ActionCommand::Unscrew { object: r(object) },
            ActionCommand::FingerPush { object } => ActionCommand::FingerPush { object: r(object) },
            ActionCommand::Wait { duration } => ActionCommand::Wait {
                duration: *duration,
            },
        }
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = self.verb().keyword();
        match self {
            ActionCommand::Get {
                object,
                source,
                hand,
            } => {
                write!(f, "{verb} {object} {source}")?;
                if let Some(h) = hand {
                    write!(f, " {h}")?;
                }
                Ok(())
            }
            ActionCommand::Put {
                object,
                destination,
            } => write!(f, "{verb} {object} {destination}"),
            ActionCommand::Pour {
                source,
                destination,
                amount,
            } => write!(f, "{verb} {source} {destination} {amount}"),
            ActionCommand::OpenDoor { object }
            | ActionCommand::CloseDoor { object }
            | ActionCommand::Screw { object }
            | ActionCommand::Unscrew { object }
            | ActionCommand::FingerPush { object } => write!(f, "{verb} {object}"),
            ActionCommand::Wait { duration } => write!(f, "{verb} {duration}"),
        }
    }
}

impl From<ActionCommand> for String {
    fn from(cmd: ActionCommand) -> String {
        cmd.to_string()
    }
}

impl TryFrom<String> for ActionCommand {
    type Error = ParseError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        parse_command(&value)
    }
}

impl FromStr for ActionCommand {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_command(s)
    }
}

/// Canonical single-line text for a command.
pub fn render_command(cmd: &ActionCommand) -> String {
    cmd.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanOrigin {
    HighLevel,
    MidLevelRepair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<ActionCommand>,
    pub origin: PlanOrigin,
    pub revision: u32,
}

impl Plan {
    pub fn new(steps: Vec<ActionCommand>) -> Self {
        Plan {
            steps,
            origin: PlanOrigin::HighLevel,
            revision: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Canonical plan text, one command per line.
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .map(render_command)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnknownVerb(String),
    WrongArity { verb: Verb, got: usize },
    NonNumericAmount(String),
    InvalidAmount(String),
    InvalidName(String),
    InvalidHand(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based line number when the error comes from a multi-line plan.
    pub line: Option<usize>,
    pub text: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, text: &str) -> Self {
        ParseError {
            kind,
            line: None,
            text: text.to_string(),
        }
    }

    /// Human-readable reason, used as the "why" of syntax feedback.
    pub fn reason(&self) -> String {
        match &self.kind {
            ParseErrorKind::Empty => "the command is empty".to_string(),
            ParseErrorKind::UnknownVerb(v) => format!("'{v}' is not a known command"),
            ParseErrorKind::WrongArity { verb, got } => format!(
                "'{}' does not take {got} argument{}",
                verb.keyword(),
                if *got == 1 { "" } else { "s" }
            ),
            ParseErrorKind::NonNumericAmount(a) => format!("'{a}' is not a whole number"),
            ParseErrorKind::InvalidAmount(a) => format!("amount '{a}' must be positive"),
            ParseErrorKind::InvalidName(n) => format!("'{n}' is not a valid object name"),
            ParseErrorKind::InvalidHand(h) => format!("'{h}' is not a hand (use left or right)"),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {} in {:?}", self.reason(), self.text),
            None => write!(f, "{} in {:?}", self.reason(), self.text),
        }
    }
}

fn name(token: &str, line: &str) -> Result<EntityId, ParseError> {
    EntityId::new(token)
        .map_err(|_| ParseError::new(ParseErrorKind::InvalidName(token.to_string()), line))
}

/// Parses a count such as `50`, `50ml` or `5s`, with an optional unit token
/// already stripped by the caller.
fn count(token: &str, unit: &str, line: &str, positive: bool) -> Result<u32, ParseError> {
    let digits = token
        .strip_suffix(unit)
        .filter(|d| !d.is_empty())
        .unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseError::new(
            ParseErrorKind::NonNumericAmount(token.to_string()),
            line,
        ));
    }
    let value: u32 = digits
        .parse()
        .map_err(|_| ParseError::new(ParseErrorKind::NonNumericAmount(token.to_string()), line))?;
    if positive && value == 0 {
        return Err(ParseError::new(
            ParseErrorKind::InvalidAmount(token.to_string()),
            line,
        ));
    }
    Ok(value)
}

/// Parses one command line.
pub fn parse_command(line: &str) -> Result<ActionCommand, ParseError> {
    let mut tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Empty, line));
    }
    let verb_token = tokens.remove(0);
    let verb = Verb::from_keyword(verb_token)
        .ok_or_else(|| ParseError::new(ParseErrorKind::UnknownVerb(verb_token.to_string()), line))?;
    let mut args = tokens;
    let arity = |args: &[&str]| {
        ParseError::new(
            ParseErrorKind::WrongArity {
                verb,
                got: args.len(),
            },
            line,
        )
    };

    match verb {
        Verb::Get => {
            if args.len() >= 3 && args[1].eq_ignore_ascii_case("from") {
                args.remove(1);
            }
            match args.as_slice() {
                [object, source] => Ok(ActionCommand::Get {
                    object: name(object, line)?,
                    source: name(source, line)?,
                    hand: None,
                }),
                [object, source, hand] => {
                    let hand = Hand::parse(hand).ok_or_else(|| {
                        ParseError::new(ParseErrorKind::InvalidHand(hand.to_string()), line)
                    })?;
                    Ok(ActionCommand::Get {
                        object: name(object, line)?,
                        source: name(source, line)?,
                        hand: Some(hand),
                    })
                }
                _ => Err(arity(&args)),
            }
        }
        Verb::Put => {
            if args.len() == 3
                && ["on", "in", "into", "onto"]
                    .iter()
                    .any(|p| p.eq_ignore_ascii_case(args[1]))
            {
                args.remove(1);
            }
            match args.as_slice() {
                [object, destination] => Ok(ActionCommand::Put {
                    object: name(object, line)?,
                    destination: name(destination, line)?,
                }),
                _ => Err(arity(&args)),
            }
        }
        Verb::Pour => {
            if args.len() == 4 && args[3].eq_ignore_ascii_case("ml") {
                args.pop();
            }
            match args.as_slice() {
                [source, destination, amount] => Ok(ActionCommand::Pour {
                    source: name(source, line)?,
                    destination: name(destination, line)?,
                    amount: count(amount, "ml", line, true)?,
                }),
                _ => Err(arity(&args)),
            }
        }
        Verb::Wait => {
            if args.len() == 2 && args[1].eq_ignore_ascii_case("s") {
                args.pop();
            }
            match args.as_slice() {
                [duration] => Ok(ActionCommand::Wait {
                    duration: count(duration, "s", line, false)?,
                }),
                _ => Err(arity(&args)),
            }
        }
        Verb::OpenDoor | Verb::CloseDoor | Verb::Screw | Verb::Unscrew | Verb::FingerPush => {
            let [object] = args.as_slice() else {
                return Err(arity(&args));
            };
            let object = name(object, line)?;
            Ok(match verb {
                Verb::OpenDoor => ActionCommand::OpenDoor { object },
                Verb::CloseDoor => ActionCommand::CloseDoor { object },
                Verb::Screw => ActionCommand::Screw { object },
                Verb::Unscrew => ActionCommand::Unscrew { object },
                _ => ActionCommand::FingerPush { object },
            })
        }
    }
}

/// Strips decorations planners commonly add around commands. Returns `None`
/// for lines that carry no command at all.
fn normalize_line(raw: &str) -> Option<&str> {
    let mut line = raw.trim();
    if line.is_empty() || line.starts_with('#') || line.starts_with("```") {
        return None;
    }
    if let Some(rest) = line.strip_prefix(['-', '*']) {
        line = rest.trim_start();
    } else {
        let digits = line.bytes().take_while(|b| b.is_ascii_digit()).count();
        if digits > 0 {
            if let Some(rest) = line[digits..].strip_prefix(['.', ')']) {
                line = rest.trim_start();
            }
        }
    }
    line = line.trim_matches('`').trim();
    if line.is_empty() {
        None
    } else {
        Some(line)
    }
}

/// Parses a whole plan. Fails on the first bad line; never returns a partial plan.
pub fn parse_plan(text: &str) -> Result<Plan, ParseError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let Some(line) = normalize_line(raw) else {
            continue;
        };
        let cmd = parse_command(line).map_err(|mut e| {
            e.line = Some(idx + 1);
            e
        })?;
        steps.push(cmd);
    }
    Ok(Plan::new(steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pour_with_amount() {
        assert_eq!(
            parse_command("pour bottle_of_gin glass 50").unwrap(),
            ActionCommand::Pour {
                source: eid("bottle_of_gin"),
                destination: eid("glass"),
                amount: 50
            }
        );
    }

    #[test]
    fn wait_zero_is_allowed() {
        assert_eq!(
            parse_command("wait 0").unwrap(),
            ActionCommand::Wait { duration: 0 }
        );
    }

    #[test]
    fn unknown_verb() {
        let err = parse_command("grasp cup").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownVerb("grasp".into()));
    }

    #[test]
    fn get_with_from_and_hand() {
        let expected = ActionCommand::Get {
            object: eid("lemon_slice"),
            source: eid("cutting_board"),
            hand: Some(Hand::Left),
        };
        assert_eq!(
            parse_command("get lemon_slice from cutting_board left").unwrap(),
            expected
        );
        assert_eq!(
            parse_command("  GET   lemon_slice cutting_board LEFT ").unwrap(),
            expected
        );
    }

    #[test]
    fn get_from_equivalence() {
        assert_eq!(
            parse_command("get cup from shelf").unwrap(),
            parse_command("get cup shelf").unwrap()
        );
    }

    #[test]
    fn names_are_case_sensitive() {
        let a = parse_command("put Cup tray").unwrap();
        let b = parse_command("put cup tray").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn put_accepts_prepositions() {
        let expected = ActionCommand::Put {
            object: eid("cup"),
            destination: eid("tray"),
        };
        for line in ["put cup tray", "put cup on tray", "put cup into tray"] {
            assert_eq!(parse_command(line).unwrap(), expected, "{line}");
        }
    }

    #[test]
    fn amount_errors() {
        assert!(matches!(
            parse_command("pour a b lots").unwrap_err().kind,
            ParseErrorKind::NonNumericAmount(_)
        ));
        assert!(matches!(
            parse_command("pour a b 12.5").unwrap_err().kind,
            ParseErrorKind::NonNumericAmount(_)
        ));
        assert!(matches!(
            parse_command("pour a b 0").unwrap_err().kind,
            ParseErrorKind::InvalidAmount(_)
        ));
        assert!(matches!(
            parse_command("wait -1").unwrap_err().kind,
            ParseErrorKind::NonNumericAmount(_)
        ));
        assert_eq!(
            parse_command("pour a b 50ml").unwrap(),
            parse_command("pour a b 50 ml").unwrap()
        );
    }

    #[test]
    fn arity_errors() {
        for line in ["get cup", "put cup", "pour a b", "open_door", "wait", "screw a b"] {
            assert!(
                matches!(
                    parse_command(line).unwrap_err().kind,
                    ParseErrorKind::WrongArity { .. }
                ),
                "{line}"
            );
        }
        assert!(matches!(
            parse_command("get cup shelf middle").unwrap_err().kind,
            ParseErrorKind::InvalidHand(_)
        ));
    }

    #[test]
    fn nine_verbs_table() {
        let table = [
            ("get cup shelf", Verb::Get),
            ("put cup tray", Verb::Put),
            ("pour bottle glass 10", Verb::Pour),
            ("open_door fridge", Verb::OpenDoor),
            ("close_door fridge", Verb::CloseDoor),
            ("screw bottle", Verb::Screw),
            ("unscrew bottle", Verb::Unscrew),
            ("finger_push microwave", Verb::FingerPush),
            ("wait 3", Verb::Wait),
        ];
        assert_eq!(table.len(), Verb::ALL.len());
        for (line, verb) in table {
            assert_eq!(parse_command(line).unwrap().verb(), verb);
        }
        assert!(Verb::from_keyword("stack").is_none());
    }

    #[test]
    fn render_canonical() {
        let pour = ActionCommand::Pour {
            source: eid("gin"),
            destination: eid("glass"),
            amount: 50,
        };
        assert_eq!(render_command(&pour), "pour gin glass 50");
        let get = ActionCommand::Get {
            object: eid("cup"),
            source: eid("shelf"),
            hand: None,
        };
        assert_eq!(render_command(&get), "get cup shelf");
        assert_eq!(render_command(&ActionCommand::Wait { duration: 5 }), "wait 5");
    }

    #[test]
    fn plan_parsing() {
        let plan = parse_plan("get cup shelf\nput cup tray").unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.revision, 0);
        assert!(parse_plan("").unwrap().is_empty());
        let err = parse_plan("get cup shelf\nfly moon").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(matches!(err.kind, ParseErrorKind::UnknownVerb(_)));
    }

    #[test]
    fn plan_decorations_are_stripped() {
        let text = "# plan for the user\n```\n1. get cup shelf\n2) put cup tray\n- wait 2\n* `wait 3`\n\n```";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.len(), 4);
        assert_eq!(plan.render(), "get cup shelf\nput cup tray\nwait 2\nwait 3");
    }

    #[test]
    fn reserved_words_are_not_names() {
        assert!(EntityId::new("from").is_err());
        assert!(EntityId::new("In").is_err());
        assert!(EntityId::new("glass_1").is_ok());
        assert!(EntityId::new("two words").is_err());
    }
}
