//! Failsafe decision targets: the ActionOptions record, the shipped
//! scenario programs and a host-side reference oracle for each.

mod oracle;
mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::isa::{HardFaultCause, Machine};

pub use oracle::{golden_output, oracle};
pub use scenario::{
    InputField, Scenario, ScenarioError, ScenarioId, ScenarioInputs, ScenarioManifest, ScenarioSpec, SHIPPED_MANIFEST,
};

/// Failsafe action codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionMode {
    None = 0,
    Warning = 1,
    Hold = 5,
    ReturnToLaunch = 6,
    Land = 7,
    Disarm = 9,
    FlightTermination = 10,
}

impl ActionMode {
    pub const ALL: [ActionMode; 7] = [
        ActionMode::None,
        ActionMode::Warning,
        ActionMode::Hold,
        ActionMode::ReturnToLaunch,
        ActionMode::Land,
        ActionMode::Disarm,
        ActionMode::FlightTermination,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionMode::None => "none",
            ActionMode::Warning => "warning",
            ActionMode::Hold => "hold",
            ActionMode::ReturnToLaunch => "rtl",
            ActionMode::Land => "land",
            ActionMode::Disarm => "disarm",
            ActionMode::FlightTermination => "flight_termination",
        }
    }
}

/// Cause codes written by the shipped programs.
pub mod cause {
    pub const NONE: u32 = 0;
    pub const RC_LOSS: u32 = 1;
    pub const BATTERY_CRITICAL: u32 = 2;
    pub const BATTERY_EMERGENCY: u32 = 3;
    pub const BATTERY_LOW: u32 = 4;
}

/// Clear-condition codes. Only one is used; the rest are reserved.
pub mod clear_condition {
    pub const NONE: u32 = 0;
    pub const ON_MODE_CHANGE_OR_DISARM: u32 = 1;
}

/// Output record of a failsafe decision, as raw words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionOptions {
    pub action: u32,
    pub cause: u32,
    pub allow_user_takeover: u32,
    pub clear_condition: u32,
}

impl ActionOptions {
    pub const fn new(action: u32, cause: u32, allow_user_takeover: u32, clear_condition: u32) -> Self {
        ActionOptions {
            action,
            cause,
            allow_user_takeover,
            clear_condition,
        }
    }

    pub fn mode(&self) -> Option<ActionMode> {
        ActionMode::from_code(self.action)
    }

    pub fn has_valid_action(&self) -> bool {
        self.mode().is_some()
    }
}

impl fmt::Display for ActionOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "action={} cause={} takeover={} clear={}",
            self.action, self.cause, self.allow_user_takeover, self.clear_condition
        )
    }
}

/// Reads four consecutive words at `base`. No validation of the values.
pub fn decode_action_options(memory: &Machine, base: u32) -> Result<ActionOptions, HardFaultCause> {
    let word = |i: u32| {
        let addr = base.checked_add(4 * i).ok_or(HardFaultCause::OutOfBoundsAccess)?;
        memory.read_word(addr)
    };
    Ok(ActionOptions {
        action: word(0)?,
        cause: word(1)?,
        allow_user_takeover: word(2)?,
        clear_condition: word(3)?,
    })
}
