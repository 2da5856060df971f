//! The 27 discrete robot actions and compact action sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 27;

const NAMES: [&str; NUM_ACTIONS] = [
    "head_left",
    "head_right",
    "head_up",
    "head_down",
    "body_forward",
    "body_backward",
    "body_left",
    "body_right",
    "body_rotate_left",
    "body_rotate_right",
    "left_arm_forward",
    "left_arm_backward",
    "left_arm_left",
    "left_arm_right",
    "left_arm_up",
    "left_arm_down",
    "right_arm_forward",
    "right_arm_backward",
    "right_arm_left",
    "right_arm_right",
    "right_arm_up",
    "right_arm_down",
    "left_hand_close",
    "left_hand_open",
    "right_hand_close",
    "right_hand_open",
    "null",
];

/// Index into the canonical action enumeration. Serialized as its index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActionId(u8);

/// Which arm an arm or hand action refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Structured view of an action, used by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    Head { pan: i8, tilt: i8 },
    Body { forward: i8, left: i8, turn: i8 },
    Arm { side: Side, forward: i8, left: i8, up: i8 },
    Hand { side: Side, open: bool },
    Null,
}

impl ActionId {
    pub const HEAD_LEFT: ActionId = ActionId(0);
    pub const HEAD_RIGHT: ActionId = ActionId(1);
    pub const HEAD_UP: ActionId = ActionId(2);
    pub const HEAD_DOWN: ActionId = ActionId(3);
    pub const BODY_FORWARD: ActionId = ActionId(4);
    pub const BODY_BACKWARD: ActionId = ActionId(5);
    pub const BODY_LEFT: ActionId = ActionId(6);
    pub const BODY_RIGHT: ActionId = ActionId(7);
    pub const BODY_ROTATE_LEFT: ActionId = ActionId(8);
    pub const BODY_ROTATE_RIGHT: ActionId = ActionId(9);
    pub const LEFT_ARM_FORWARD: ActionId = ActionId(10);
    pub const RIGHT_ARM_FORWARD: ActionId = ActionId(16);
    pub const LEFT_HAND_CLOSE: ActionId = ActionId(22);
    pub const LEFT_HAND_OPEN: ActionId = ActionId(23);
    pub const RIGHT_HAND_CLOSE: ActionId = ActionId(24);
    pub const RIGHT_HAND_OPEN: ActionId = ActionId(25);
    pub const NULL: ActionId = ActionId(26);

    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_ACTIONS {
            Ok(ActionId(index as u8))
        } else {
            Err(Error::InvalidAction(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn all() -> impl DoubleEndedIterator<Item = ActionId> + ExactSizeIterator {
        (0..NUM_ACTIONS as u8).map(ActionId)
    }

    pub fn is_head(self) -> bool {
        self.0 <= 3
    }

    pub fn motion(self) -> Motion {
        let arm = |side, i: u8| {
            let (forward, left, up) = match i {
                0 => (1, 0, 0),
                1 => (-1, 0, 0),
                2 => (0, 1, 0),
                3 => (0, -1, 0),
                4 => (0, 0, 1),
                _ => (0, 0, -1),
            };
            Motion::Arm { side, forward, left, up }
        };
        match self.0 {
            0 => Motion::Head { pan: 1, tilt: 0 },
            1 => Motion::Head { pan: -1, tilt: 0 },
            2 => Motion::Head { pan: 0, tilt: 1 },
            3 => Motion::Head { pan: 0, tilt: -1 },
            4 => Motion::Body { forward: 1, left: 0, turn: 0 },
            5 => Motion::Body { forward: -1, left: 0, turn: 0 },
            6 => Motion::Body { forward: 0, left: 1, turn: 0 },
            7 => Motion::Body { forward: 0, left: -1, turn: 0 },
            8 => Motion::Body { forward: 0, left: 0, turn: 1 },
            9 => Motion::Body { forward: 0, left: 0, turn: -1 },
            i @ 10..=15 => arm(Side::Left, i - 10),
            i @ 16..=21 => arm(Side::Right, i - 16),
            22 => Motion::Hand { side: Side::Left, open: false },
            23 => Motion::Hand { side: Side::Left, open: true },
            24 => Motion::Hand { side: Side::Right, open: false },
            25 => Motion::Hand { side: Side::Right, open: true },
            _ => Motion::Null,
        }
    }
}

impl TryFrom<u8> for ActionId {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        ActionId::new(value as usize)
    }
}

impl From<ActionId> for u8 {
    fn from(a: ActionId) -> u8 {
        a.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionId {
    type Err = Error;

    /// Accepts either a snake-case name or a decimal index.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(i) = NAMES.iter().position(|n| *n == s) {
            return Ok(ActionId(i as u8));
        }
        match s.parse::<usize>() {
            Ok(i) => ActionId::new(i),
            Err(_) => Err(Error::UnknownActionName(s.to_string())),
        }
    }
}

/// The index↔name table, one `index name` pair per line.
pub fn action_table() -> String {
    ActionId::all()
        .map(|a| format!("{:>2} {}\n", a.index(), a.name()))
        .collect()
}

/// A set of actions stored as a 27-bit mask. Iterates in index order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u32);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const ALL: ActionSet = ActionSet((1 << NUM_ACTIONS) - 1);

    pub fn from_bits(bits: u32) -> Self {
        ActionSet(bits & Self::ALL.0)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn insert(&mut self, a: ActionId) {
        self.0 |= 1 << a.0;
    }

    pub fn contains(self, a: ActionId) -> bool {
        self.0 & (1 << a.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ActionSet) -> ActionSet {
        ActionSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ActionSet) -> ActionSet {
        ActionSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        (0..NUM_ACTIONS as u8)
            .filter(move |i| self.0 & (1 << i) != 0)
            .map(ActionId)
    }
}

impl FromIterator<ActionId> for ActionSet {
    fn from_iter<I: IntoIterator<Item = ActionId>>(iter: I) -> Self {
        let mut set = ActionSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}
