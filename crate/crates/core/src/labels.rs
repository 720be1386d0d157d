//! The two categorical label families recognised by the classifiers.

use std::fmt;
use std::str::FromStr;

/// A closed set of class labels with a stable index order.
///
/// The index order is the class order of the classifier head and of the
/// confusion matrices, so it must never change for a persisted model.
pub trait Label: Copy + Eq + fmt::Debug + fmt::Display + Send + Sync + 'static {
    const ALL: &'static [Self];
    const FAMILY: Family;

    fn index(self) -> usize;

    fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    fn count() -> usize {
        Self::ALL.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MoveState,
    ActionUnit,
}

impl Family {
    pub fn class_count(self) -> usize {
        match self {
            Family::MoveState => MoveState::ALL.len(),
            Family::ActionUnit => AuLabel::ALL.len(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::MoveState => f.write_str("move_state"),
            Family::ActionUnit => f.write_str("au_label"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {family} label `{text}`")]
pub struct ParseLabelError {
    pub family: Family,
    pub text: String,
}

/// Movement state recognised by the first-stage classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MoveState {
    Walking,
    Running,
    Stop,
    DownStairs,
    UpStairs,
}

impl MoveState {
    /// States whose action units displace the user in the plane.
    pub fn is_planar(self) -> bool {
        matches!(self, MoveState::Walking | MoveState::Running)
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveState::Walking => "Walking",
            MoveState::Running => "Running",
            MoveState::Stop => "Stop",
            MoveState::DownStairs => "DownStairs",
            MoveState::UpStairs => "UpStairs",
        }
    }
}

impl Label for MoveState {
    const ALL: &'static [Self] = &[
        MoveState::Walking,
        MoveState::Running,
        MoveState::Stop,
        MoveState::DownStairs,
        MoveState::UpStairs,
    ];
    const FAMILY: Family = Family::MoveState;

    fn index(self) -> usize {
        self as usize
    }
}

/// Action Unit recognised by the second-stage classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuLabel {
    LongStep,
    NormalStep,
    ShortStep,
    LeftTurn,
    RightTurn,
    Abnormal,
    Stop,
}

/// Step-length category of a step Action Unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepType {
    Short,
    Normal,
    Long,
}

impl StepType {
    pub const ALL: [StepType; 3] = [StepType::Short, StepType::Normal, StepType::Long];

    /// Position in [`StepType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            StepType::Short => "SS",
            StepType::Normal => "NS",
            StepType::Long => "LS",
        }
    }
}

impl fmt::Display for StepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StepType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "SS" | "ShortStep" => Ok(StepType::Short),
            "NS" | "NormalStep" => Ok(StepType::Normal),
            "LS" | "LongStep" => Ok(StepType::Long),
            other => Err(format!("unknown step type `{other}`")),
        }
    }
}

impl AuLabel {
    pub fn step_type(self) -> Option<StepType> {
        match self {
            AuLabel::ShortStep => Some(StepType::Short),
            AuLabel::NormalStep => Some(StepType::Normal),
            AuLabel::LongStep => Some(StepType::Long),
            _ => None,
        }
    }

    pub fn from_step_type(step: StepType) -> Self {
        match step {
            StepType::Short => AuLabel::ShortStep,
            StepType::Normal => AuLabel::NormalStep,
            StepType::Long => AuLabel::LongStep,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuLabel::LongStep => "LongStep",
            AuLabel::NormalStep => "NormalStep",
            AuLabel::ShortStep => "ShortStep",
            AuLabel::LeftTurn => "LeftTurn",
            AuLabel::RightTurn => "RightTurn",
            AuLabel::Abnormal => "Abnormal",
            AuLabel::Stop => "Stop",
        }
    }
}

impl Label for AuLabel {
    const ALL: &'static [Self] = &[
        AuLabel::LongStep,
        AuLabel::NormalStep,
        AuLabel::ShortStep,
        AuLabel::LeftTurn,
        AuLabel::RightTurn,
        AuLabel::Abnormal,
        AuLabel::Stop,
    ];
    const FAMILY: Family = Family::ActionUnit;

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MoveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for AuLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MoveState {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        MoveState::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseLabelError {
                family: Family::MoveState,
                text: s.to_string(),
            })
    }
}

impl FromStr for AuLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(step) = s.parse::<StepType>() {
            return Ok(AuLabel::from_step_type(step));
        }
        AuLabel::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseLabelError {
                family: Family::ActionUnit,
                text: s.to_string(),
            })
    }
}

/// A label from either family, used where both can appear in one place
/// (training sets, persisted models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnyLabel {
    Move(MoveState),
    Au(AuLabel),
}

impl AnyLabel {
    pub fn family(self) -> Family {
        match self {
            AnyLabel::Move(_) => Family::MoveState,
            AnyLabel::Au(_) => Family::ActionUnit,
        }
    }

    pub fn index(self) -> usize {
        match self {
            AnyLabel::Move(m) => m.index(),
            AnyLabel::Au(a) => a.index(),
        }
    }
}

impl From<MoveState> for AnyLabel {
    fn from(m: MoveState) -> Self {
        AnyLabel::Move(m)
    }
}

impl From<AuLabel> for AnyLabel {
    fn from(a: AuLabel) -> Self {
        AnyLabel::Au(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        assert_eq!(MoveState::count(), 5);
        assert_eq!(AuLabel::count(), 7);
    }

    #[test]
    fn index_order_is_stable() {
        for (i, m) in MoveState::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert_eq!(MoveState::from_index(i), Some(*m));
        }
        for (i, a) in AuLabel::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
        }
        assert_eq!(AuLabel::from_index(7), None);
    }

    #[test]
    fn parse_names_and_codes() {
        assert_eq!("NS".parse::<AuLabel>().unwrap(), AuLabel::NormalStep);
        assert_eq!("lefttURN".parse::<AuLabel>().unwrap(), AuLabel::LeftTurn);
        assert_eq!(
            "UpStairs".parse::<MoveState>().unwrap(),
            MoveState::UpStairs
        );
        assert!("Jumping".parse::<MoveState>().is_err());
        for a in AuLabel::ALL {
            assert_eq!(a.to_string().parse::<AuLabel>().unwrap(), *a);
        }
    }
}
