use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{self, AsmError, SymbolTable};
use crate::isa::{ImageError, MemoryImage, MemoryLayout};

use super::ActionOptions;

/// The scenario manifest shipped with the crate.
pub const SHIPPED_MANIFEST: &str = include_str!("../../scenarios/scenarios.toml");

const SHIPPED_PROGRAMS: [(&str, &str); 3] = [
    ("rc_loss.asm", include_str!("../../scenarios/rc_loss.asm")),
    (
        "battery_critical.asm",
        include_str!("../../scenarios/battery_critical.asm"),
    ),
    (
        "battery_emergency.asm",
        include_str!("../../scenarios/battery_emergency.asm"),
    ),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("bad scenario manifest: {0}")]
    Manifest(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("{program}: {source}")]
    Asm {
        program: String,
        #[source]
        source: AsmError,
    },
    #[error("symbol `{0}` is not defined")]
    MissingSymbol(String),
    #[error("input `{0}` is not defined for this scenario")]
    MissingInput(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    RcLoss,
    BatteryCritical,
    BatteryEmergency,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [
        ScenarioId::RcLoss,
        ScenarioId::BatteryCritical,
        ScenarioId::BatteryEmergency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::RcLoss => "rc_loss",
            ScenarioId::BatteryCritical => "battery_critical",
            ScenarioId::BatteryEmergency => "battery_emergency",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| ScenarioError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputField {
    pub name: String,
    pub offset: u32,
    pub golden: u32,
    pub valid: Vec<u32>,
    #[serde(default)]
    pub meaning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub name: String,
    pub program: String,
    pub entry: String,
    pub start_symbol: String,
    pub halt_symbol: String,
    #[serde(default)]
    pub helper_start_symbol: Option<String>,
    #[serde(default)]
    pub helper_halt_symbol: Option<String>,
    pub expected_action: u32,
    pub inputs: Vec<InputField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub schema: String,
    pub input_base: u32,
    pub output_base: u32,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
    /// Directory that program paths are relative to; unset for the
    /// shipped manifest.
    #[serde(skip)]
    pub root: Option<PathBuf>,
}

impl ScenarioManifest {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Manifest(e.to_string()))
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_MANIFEST).expect("shipped manifest parses")
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest = Self::parse(&text)?;
        manifest.root = Some(path.parent().unwrap_or(Path::new(".")).to_path_buf());
        Ok(manifest)
    }

    pub fn spec(&self, id: ScenarioId) -> Result<&ScenarioSpec, ScenarioError> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ScenarioError::Unknown(id.to_string()))
    }

    fn program_source(&self, program: &str) -> Result<String, ScenarioError> {
        match &self.root {
            Some(root) => {
                let path = root.join(program);
                std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })
            }
            None => SHIPPED_PROGRAMS
                .iter()
                .find(|(name, _)| *name == program)
                .map(|(_, src)| src.to_string())
                .ok_or_else(|| ScenarioError::Manifest(format!("no shipped program `{program}`"))),
        }
    }

    /// Assembles the scenario's program.
    pub fn load(&self, id: ScenarioId) -> Result<Scenario, ScenarioError> {
        let spec = self.spec(id)?.clone();
        let source = self.program_source(&spec.program)?;
        let layout = MemoryLayout::default();
        let (image, symbols) = asm::assemble_with(&source, &layout).map_err(|source| ScenarioError::Asm {
            program: spec.program.clone(),
            source,
        })?;
        let scenario = Scenario {
            spec,
            source,
            image,
            symbols,
            layout,
            input_base: self.input_base,
            output_base: self.output_base,
        };
        for sym in scenario.window_symbols() {
            scenario.symbol(sym)?;
        }
        Ok(scenario)
    }
}

/// Typed scenario inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioInputs {
    RcLoss { rc_valid: u32, nav_rcl_act: u32 },
    BatteryCritical { battery_warning: u32, com_low_bat_act: u32 },
    BatteryEmergency { com_low_bat_act: u32, samples: [u32; 4] },
}

impl ScenarioInputs {
    /// Inputs the campaigns run under.
    pub fn golden(id: ScenarioId) -> Self {
        match id {
            ScenarioId::RcLoss => ScenarioInputs::RcLoss {
                rc_valid: 0,
                nav_rcl_act: 2,
            },
            ScenarioId::BatteryCritical => ScenarioInputs::BatteryCritical {
                battery_warning: 2,
                com_low_bat_act: 3,
            },
            ScenarioId::BatteryEmergency => ScenarioInputs::BatteryEmergency {
                com_low_bat_act: 3,
                samples: [42, 40, 4, 38],
            },
        }
    }

    pub fn id(&self) -> ScenarioId {
        match self {
            ScenarioInputs::RcLoss { .. } => ScenarioId::RcLoss,
            ScenarioInputs::BatteryCritical { .. } => ScenarioId::BatteryCritical,
            ScenarioInputs::BatteryEmergency { .. } => ScenarioId::BatteryEmergency,
        }
    }

    /// Named values, in manifest naming.
    pub fn values(&self) -> Vec<(&'static str, u32)> {
        match *self {
            ScenarioInputs::RcLoss { rc_valid, nav_rcl_act } => {
                vec![("rc_valid", rc_valid), ("nav_rcl_act", nav_rcl_act)]
            }
            ScenarioInputs::BatteryCritical {
                battery_warning,
                com_low_bat_act,
            } => vec![
                ("battery_warning", battery_warning),
                ("com_low_bat_act", com_low_bat_act),
            ],
            ScenarioInputs::BatteryEmergency {
                com_low_bat_act,
                samples,
            } => vec![
                ("com_low_bat_act", com_low_bat_act),
                ("sample0", samples[0]),
                ("sample1", samples[1]),
                ("sample2", samples[2]),
                ("sample3", samples[3]),
            ],
        }
    }

    pub fn from_values(id: ScenarioId, get: impl Fn(&str) -> Option<u32>) -> Result<Self, ScenarioError> {
        let need = |name: &str| get(name).ok_or_else(|| ScenarioError::MissingInput(name.to_string()));
        Ok(match id {
            ScenarioId::RcLoss => ScenarioInputs::RcLoss {
                rc_valid: need("rc_valid")?,
                nav_rcl_act: need("nav_rcl_act")?,
            },
            ScenarioId::BatteryCritical => ScenarioInputs::BatteryCritical {
                battery_warning: need("battery_warning")?,
                com_low_bat_act: need("com_low_bat_act")?,
            },
            ScenarioId::BatteryEmergency => ScenarioInputs::BatteryEmergency {
                com_low_bat_act: need("com_low_bat_act")?,
                samples: [need("sample0")?, need("sample1")?, need("sample2")?, need("sample3")?],
            },
        })
    }
}

/// An assembled scenario program plus its manifest entry.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub source: String,
    pub image: MemoryImage,
    pub symbols: SymbolTable,
    pub layout: MemoryLayout,
    pub input_base: u32,
    pub output_base: u32,
}

impl Scenario {
    /// Loads a scenario from the shipped manifest.
    pub fn shipped(id: ScenarioId) -> Result<Self, ScenarioError> {
        ScenarioManifest::shipped().load(id)
    }

    pub fn id(&self) -> ScenarioId {
        self.spec.id
    }

    pub fn symbol(&self, name: &str) -> Result<u32, ScenarioError> {
        self.symbols
            .get(name)
            .ok_or_else(|| ScenarioError::MissingSymbol(name.to_string()))
    }

    pub fn entry(&self) -> Result<u32, ScenarioError> {
        self.symbol(&self.spec.entry)
    }

    fn window_symbols(&self) -> Vec<&str> {
        let mut v = vec![
            self.spec.entry.as_str(),
            self.spec.start_symbol.as_str(),
            self.spec.halt_symbol.as_str(),
        ];
        v.extend(self.spec.helper_start_symbol.as_deref());
        v.extend(self.spec.helper_halt_symbol.as_deref());
        v
    }

    /// Inputs declared as golden in the manifest.
    pub fn manifest_golden_inputs(&self) -> Result<ScenarioInputs, ScenarioError> {
        ScenarioInputs::from_values(self.id(), |name| {
            self.spec.inputs.iter().find(|f| f.name == name).map(|f| f.golden)
        })
    }

    /// Image with the given inputs written into the input region.
    pub fn image_with(&self, inputs: &ScenarioInputs) -> Result<MemoryImage, ScenarioError> {
        let mut image = self.image.clone();
        for (name, value) in inputs.values() {
            let field = self
                .spec
                .inputs
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| ScenarioError::MissingInput(name.to_string()))?;
            image.set_data_word(self.input_base + field.offset, value, &self.layout)?;
        }
        Ok(image)
    }

    /// Image under the golden inputs.
    pub fn golden_image(&self) -> Result<MemoryImage, ScenarioError> {
        self.image_with(&ScenarioInputs::golden(self.id()))
    }

    pub fn golden_output(&self) -> ActionOptions {
        super::golden_output(self.id())
    }

    /// Cartesian product of every input's `valid` list.
    pub fn valid_inputs(&self) -> Result<Vec<ScenarioInputs>, ScenarioError> {
        let fields = &self.spec.inputs;
        let mut combos: Vec<Vec<u32>> = vec![Vec::new()];
        for field in fields {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    field.valid.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .map(|values| {
                ScenarioInputs::from_values(self.id(), |name| {
                    fields.iter().position(|f| f.name == name).map(|i| values[i])
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_manifest_loads_every_scenario() {
        let manifest = ScenarioManifest::shipped();
        assert_eq!(manifest.input_base, 0x1_0000);
        assert_eq!(manifest.output_base, 0x1_0100);
        for id in ScenarioId::ALL {
            let sc = manifest.load(id).unwrap();
            assert_eq!(sc.manifest_golden_inputs().unwrap(), ScenarioInputs::golden(id));
            assert_eq!(sc.spec.expected_action, super::super::golden_output(id).action);
        }
    }

    #[test]
    fn valid_input_product_sizes() {
        let sc = Scenario::shipped(ScenarioId::RcLoss).unwrap();
        assert_eq!(sc.valid_inputs().unwrap().len(), 12);
        let sc = Scenario::shipped(ScenarioId::BatteryEmergency).unwrap();
        assert_eq!(sc.valid_inputs().unwrap().len(), 4 * 9 * 9 * 9 * 9);
    }

    #[test]
    fn scenario_ids_parse() {
        assert_eq!("rc-loss".parse::<ScenarioId>().unwrap(), ScenarioId::RcLoss);
        assert!("nope".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn image_with_patches_inputs() {
        let sc = Scenario::shipped(ScenarioId::RcLoss).unwrap();
        let img = sc
            .image_with(&ScenarioInputs::RcLoss {
                rc_valid: 1,
                nav_rcl_act: 5,
            })
            .unwrap();
        let words: Vec<u32> = img.data_words().map(|(_, w)| w).take(2).collect();
        assert_eq!(words, vec![1, 5]);
    }
}
