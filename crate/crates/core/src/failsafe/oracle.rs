//! Host-side reference implementation of the failsafe decisions. Written
//! against the input meanings only, not against the assembly.

use super::{cause, clear_condition, ActionMode, ActionOptions, ScenarioId, ScenarioInputs};

const BATTERY_EMERGENCY_BELOW: u32 = 5;
const BATTERY_CRITICAL_BELOW: u32 = 7;
const BATTERY_LOW_BELOW: u32 = 15;
/// Readings above this are implausible and ignored.
const SAMPLE_MAX: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BatteryLevel {
    Ok,
    Low,
    Critical,
    Emergency,
}

fn triggered(action: ActionMode, cause: u32) -> ActionOptions {
    let takeover = match action {
        ActionMode::Disarm | ActionMode::FlightTermination => 0,
        _ => 1,
    };
    ActionOptions::new(
        action.code(),
        cause,
        takeover,
        clear_condition::ON_MODE_CHANGE_OR_DISARM,
    )
}

fn rc_loss(rc_valid: u32, nav_rcl_act: u32) -> ActionOptions {
    if rc_valid != 0 {
        return ActionOptions::default();
    }
    let action = match nav_rcl_act {
        0 => ActionMode::None,
        1 => ActionMode::Hold,
        3 => ActionMode::Land,
        5 => ActionMode::FlightTermination,
        6 => ActionMode::Disarm,
        _ => ActionMode::ReturnToLaunch,
    };
    triggered(action, cause::RC_LOSS)
}

fn battery(level: BatteryLevel, low_bat_act: u32) -> ActionOptions {
    use ActionMode::*;
    match level {
        BatteryLevel::Ok => ActionOptions::default(),
        BatteryLevel::Low => triggered(Warning, cause::BATTERY_LOW),
        BatteryLevel::Critical => {
            let action = match low_bat_act {
                1 | 3 => ReturnToLaunch,
                2 => Land,
                _ => Warning,
            };
            triggered(action, cause::BATTERY_CRITICAL)
        }
        BatteryLevel::Emergency => {
            let action = match low_bat_act {
                1 => ReturnToLaunch,
                2 | 3 => Land,
                _ => Warning,
            };
            triggered(action, cause::BATTERY_EMERGENCY)
        }
    }
}

fn level_from_warning(code: u32) -> BatteryLevel {
    match code {
        0 => BatteryLevel::Ok,
        1 => BatteryLevel::Low,
        2 => BatteryLevel::Critical,
        _ => BatteryLevel::Emergency,
    }
}

fn level_from_remaining(percent: u32) -> BatteryLevel {
    if percent < BATTERY_EMERGENCY_BELOW {
        BatteryLevel::Emergency
    } else if percent < BATTERY_CRITICAL_BELOW {
        BatteryLevel::Critical
    } else if percent < BATTERY_LOW_BELOW {
        BatteryLevel::Low
    } else {
        BatteryLevel::Ok
    }
}

/// Reference decision for arbitrary inputs.
pub fn oracle(inputs: &ScenarioInputs) -> ActionOptions {
    match *inputs {
        ScenarioInputs::RcLoss { rc_valid, nav_rcl_act } => rc_loss(rc_valid, nav_rcl_act),
        ScenarioInputs::BatteryCritical {
            battery_warning,
            com_low_bat_act,
        } => battery(level_from_warning(battery_warning), com_low_bat_act),
        ScenarioInputs::BatteryEmergency {
            com_low_bat_act,
            samples,
        } => {
            let level = samples
                .iter()
                .filter(|&&s| s <= SAMPLE_MAX)
                .map(|&s| level_from_remaining(s))
                .max()
                .unwrap_or(BatteryLevel::Ok);
            battery(level, com_low_bat_act)
        }
    }
}

/// Expected output of the fault-free run under the scenario's golden inputs.
pub fn golden_output(id: ScenarioId) -> ActionOptions {
    oracle(&ScenarioInputs::golden(id))
}
