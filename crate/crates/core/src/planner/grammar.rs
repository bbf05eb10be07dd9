//! Instruction grammar.
//!
//! ```text
//! list    := command (sep+ command)* "."?
//! sep     := "and" | "then" | ","
//! command := "pick" "up" ref
//!          | "grasp" ref
//!          | "place" "it" "on" ref
//!          | ("put" | "place") ref "on" ref
//!          | "move" "to" target
//!          | "sort" "the" ("cubes" | "spheres") "by" ("color" | "colour")
//!          | "avoid" ref
//! target  := "the"? "home" | ref
//! ref     := "it" | "the"? color? noun | object_id
//! noun    := "cube" | "sphere" | "platform" | "obstacle"
//! ```
//!
//! Matching is case-insensitive except for object ids, which are any word
//! containing `_` or a digit. `it` stands for the most recently grasped reference.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ObjectRef, Target};
use crate::env::{Color, Shape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    PickUp(ObjectRef),
    Grasp(ObjectRef),
    /// Put down whatever is held.
    PlaceOn(ObjectRef),
    Put {
        object: ObjectRef,
        target: ObjectRef,
    },
    MoveTo(Target),
    /// Place every graspable object of this shape on the platform of its color.
    Sort(Shape),
    /// Keep clear of this obstacle on the next motion.
    Avoid(ObjectRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommandList {
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unexpected {found} at position {position}; expected {}", expected.join(" | "))]
pub struct ParseError {
    /// Byte offset of the offending token.
    pub position: usize,
    pub found: String,
    pub expected: Vec<String>,
}

impl ParseError {
    /// The error message with the instruction and a caret under the offending token.
    pub fn render(&self, instruction: &str) -> String {
        let col = instruction.get(..self.position).map_or(0, |p| p.chars().count());
        format!("{self}\n  {instruction}\n  {}^", " ".repeat(col))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
    raw: String,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == ',' {
            chars.next();
            out.push(Token { tok: Tok::Comma, pos, raw: ",".into() });
        } else if c == '.' && text[pos + 1..].trim().is_empty() {
            break;
        } else if c.is_alphanumeric() || c == '_' {
            let mut end = pos;
            while let Some(&(i, ch)) = chars.peek() {
                if ch.is_alphanumeric() || ch == '_' {
                    end = i + ch.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let raw = text[pos..end].to_string();
            out.push(Token { tok: Tok::Word(raw.to_lowercase()), pos, raw });
        } else {
            return Err(ParseError {
                position: pos,
                found: format!("`{c}`"),
                expected: vec!["a word".into(), "`,`".into()],
            });
        }
    }
    Ok(out)
}

const COMMAND_STARTS: [&str; 7] = ["pick", "grasp", "place", "put", "move", "sort", "avoid"];

fn is_object_id(raw: &str) -> bool {
    raw.contains('_') || raw.chars().any(|c| c.is_ascii_digit())
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    end: usize,
    last_grasped: Option<ObjectRef>,
}

impl Parser<'_> {
    fn word_at(&self, i: usize) -> Option<&str> {
        match self.toks.get(i).map(|t| &t.tok) {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn peek_word(&self) -> Option<&str> {
        self.word_at(self.i)
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let (position, found) = match self.toks.get(self.i) {
            Some(t) => (t.pos, format!("`{}`", t.raw)),
            None => (self.end, "end of input".into()),
        };
        ParseError { position, found, expected: expected.iter().map(|s| s.to_string()).collect() }
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek_word() == Some(word) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), ParseError> {
        if self.eat(word) {
            Ok(())
        } else {
            Err(self.error(&[word]))
        }
    }

    fn list(&mut self) -> Result<Vec<Command>, ParseError> {
        let mut commands = vec![self.command()?];
        loop {
            let mut saw_sep = false;
            while let Some(t) = self.toks.get(self.i) {
                match &t.tok {
                    Tok::Comma => {}
                    Tok::Word(w) if w == "and" || w == "then" => {}
                    _ => break,
                }
                self.i += 1;
                saw_sep = true;
            }
            if self.i == self.toks.len() {
                if saw_sep {
                    return Err(self.error(&COMMAND_STARTS));
                }
                return Ok(commands);
            }
            if !saw_sep {
                return Err(self.error(&["and", "then", ",", "end of input"]));
            }
            commands.push(self.command()?);
        }
    }

    fn command(&mut self) -> Result<Command, ParseError> {
        let Some(w) = self.peek_word().map(str::to_owned) else {
            return Err(self.error(&COMMAND_STARTS));
        };
        self.i += 1;
        match w.as_str() {
            "pick" => {
                self.expect("up")?;
                let r = self.object_ref()?;
                self.last_grasped = Some(r.clone());
                Ok(Command::PickUp(r))
            }
            "grasp" => {
                let r = self.object_ref()?;
                self.last_grasped = Some(r.clone());
                Ok(Command::Grasp(r))
            }
            "place" if self.peek_word() == Some("it") && self.word_at(self.i + 1) == Some("on") => {
                self.i += 2;
                Ok(Command::PlaceOn(self.object_ref()?))
            }
            "put" | "place" => {
                let object = self.object_ref()?;
                self.expect("on")?;
                let target = self.object_ref()?;
                self.last_grasped = Some(object.clone());
                Ok(Command::Put { object, target })
            }
            "move" => {
                self.expect("to")?;
                let save = self.i;
                self.eat("the");
                if self.eat("home") {
                    return Ok(Command::MoveTo(Target::home()));
                }
                self.i = save;
                Ok(Command::MoveTo(Target::Object(self.object_ref()?)))
            }
            "sort" => {
                self.expect("the")?;
                let shape = match self.peek_word() {
                    Some("cubes") => Shape::Cube,
                    Some("spheres") => Shape::Sphere,
                    _ => return Err(self.error(&["cubes", "spheres"])),
                };
                self.i += 1;
                self.expect("by")?;
                if !(self.eat("color") || self.eat("colour")) {
                    return Err(self.error(&["color"]));
                }
                Ok(Command::Sort(shape))
            }
            "avoid" => Ok(Command::Avoid(self.object_ref()?)),
            _ => {
                self.i -= 1;
                Err(self.error(&COMMAND_STARTS))
            }
        }
    }

    fn object_ref(&mut self) -> Result<ObjectRef, ParseError> {
        if self.peek_word() == Some("it") {
            return match &self.last_grasped {
                Some(r) => {
                    self.i += 1;
                    Ok(r.clone())
                }
                None => Err(self.error(&["an object (nothing has been grasped for `it` to refer to)"])),
            };
        }
        if let Some(t) = self.toks.get(self.i) {
            if matches!(t.tok, Tok::Word(_)) && is_object_id(&t.raw) {
                self.i += 1;
                return Ok(ObjectRef::named(&t.raw));
            }
        }
        self.eat("the");
        let mut color = None;
        if let Some(c) = self.peek_word().and_then(|w| w.parse::<Color>().ok()) {
            color = Some(c);
            self.i += 1;
        }
        match self.peek_word().and_then(|w| w.parse::<Shape>().ok()) {
            Some(shape) => {
                self.i += 1;
                Ok(ObjectRef { name: None, color, shape: Some(shape) })
            }
            None => {
                let mut expected: Vec<&str> = Shape::ALL.iter().map(|s| s.as_str()).collect();
                if color.is_none() {
                    expected.extend(Color::ALL.iter().map(|c| c.as_str()));
                    expected.push("object_id");
                }
                Err(self.error(&expected))
            }
        }
    }
}

pub fn parse_instruction(instruction: &str) -> Result<ParsedCommandList, ParseError> {
    let toks = tokenize(instruction)?;
    let end = instruction.trim_end().trim_end_matches('.').len();
    let mut p = Parser { toks: &toks, i: 0, end, last_grasped: None };
    Ok(ParsedCommandList { commands: p.list()? })
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::PickUp(r) => write!(f, "pick up {r}"),
            Command::Grasp(r) => write!(f, "grasp {r}"),
            Command::PlaceOn(r) => write!(f, "place it on {r}"),
            Command::Put { object, target } => write!(f, "put {object} on {target}"),
            Command::MoveTo(t) => write!(f, "move to {t}"),
            Command::Sort(s) => write!(f, "sort the {s}s by color"),
            Command::Avoid(r) => write!(f, "avoid {r}"),
        }
    }
}

impl fmt::Display for ParsedCommandList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.commands.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(" and "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn red_cube() -> ObjectRef {
        ObjectRef::colored(Color::Red, Shape::Cube)
    }

    #[test]
    fn headline_instruction() {
        let p = parse_instruction("Pick up the red cube and place it on the blue platform").unwrap();
        assert_eq!(
            p.commands,
            vec![Command::PickUp(red_cube()), Command::PlaceOn(ObjectRef::colored(Color::Blue, Shape::Platform))]
        );
    }

    #[test]
    fn single_command() {
        let p = parse_instruction("move to the cube").unwrap();
        assert_eq!(p.commands, vec![Command::MoveTo(Target::Object(ObjectRef::shape(Shape::Cube)))]);
    }

    #[test]
    fn unknown_noun_is_reported_at_its_token() {
        let text = "pick up the frobulator";
        let e = parse_instruction(text).unwrap_err();
        assert_eq!(e.position, text.find("frobulator").unwrap());
        assert_eq!(e.found, "`frobulator`");
        assert!(e.expected.iter().any(|x| x == "cube"));
        let rendered = e.render(text);
        let caret_line = rendered.lines().last().unwrap();
        assert_eq!(caret_line.find('^').unwrap(), 2 + text.find("frobulator").unwrap());
    }

    #[test]
    fn separators_and_punctuation() {
        let p = parse_instruction("Pick up the red cube, then place it on the blue platform.").unwrap();
        assert_eq!(p.commands.len(), 2);
        let p = parse_instruction("grasp red_cube and then move to home").unwrap();
        assert_eq!(p.commands, vec![Command::Grasp(ObjectRef::named("red_cube")), Command::MoveTo(Target::home())]);
    }

    #[test]
    fn pronoun_binds_to_last_grasped() {
        let p = parse_instruction("pick up the red cube and move to it").unwrap();
        assert_eq!(p.commands[1], Command::MoveTo(Target::Object(red_cube())));
        let e = parse_instruction("move to it").unwrap_err();
        assert_eq!(e.position, 8);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(parse_instruction("").unwrap_err().found, "end of input");
        assert!(parse_instruction("pick up the red cube and").is_err());
        assert!(parse_instruction("pick up the red cube place it on the blue platform").is_err());
        assert!(parse_instruction("sort the platforms by color").is_err());
        assert!(parse_instruction("move to the cube; grasp it").is_err());
        assert!(parse_instruction("pick up the red").is_err());
    }

    #[test]
    fn sort_and_avoid() {
        let p = parse_instruction("avoid the obstacle then sort the cubes by colour").unwrap();
        assert_eq!(p.commands, vec![Command::Avoid(ObjectRef::shape(Shape::Obstacle)), Command::Sort(Shape::Cube)]);
    }

    fn arb_ref() -> impl Strategy<Value = ObjectRef> {
        let color = proptest::option::of(proptest::sample::select(Color::ALL.to_vec()));
        let shape = proptest::sample::select(Shape::ALL.to_vec());
        prop_oneof![
            4 => (color, shape).prop_map(|(color, shape)| ObjectRef { name: None, color, shape: Some(shape) }),
            1 => "[a-z]{1,6}_[a-z0-9]{1,6}".prop_map(|n| ObjectRef::named(&n)),
        ]
    }

    fn arb_command() -> impl Strategy<Value = Command> {
        prop_oneof![
            arb_ref().prop_map(Command::PickUp),
            arb_ref().prop_map(Command::Grasp),
            arb_ref().prop_map(Command::PlaceOn),
            (arb_ref(), arb_ref()).prop_map(|(object, target)| Command::Put { object, target }),
            arb_ref().prop_map(|r| Command::MoveTo(Target::Object(r))),
            Just(Command::MoveTo(Target::home())),
            prop_oneof![Just(Shape::Cube), Just(Shape::Sphere)].prop_map(Command::Sort),
            arb_ref().prop_map(Command::Avoid),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_then_parse_is_identity(commands in proptest::collection::vec(arb_command(), 1..7)) {
            let list = ParsedCommandList { commands };
            let text = list.to_string();
            prop_assert_eq!(parse_instruction(&text).unwrap(), list.clone());
            if !text.contains('_') {
                prop_assert_eq!(parse_instruction(&text.to_uppercase()).unwrap(), list);
            }
        }
    }
}
