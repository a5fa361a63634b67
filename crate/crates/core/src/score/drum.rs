/// The engine's 7-way drum vocabulary. `None` only appears as the
/// "no previous / next drum" observation value, never as a score event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DrumId {
    Snare,
    Tom,
    Ride,
    HiHat,
    Crash,
    Kick,
    None,
}

impl DrumId {
    pub const COUNT: usize = 7;
    pub const ALL: [DrumId; 7] = [
        DrumId::Snare,
        DrumId::Tom,
        DrumId::Ride,
        DrumId::HiHat,
        DrumId::Crash,
        DrumId::Kick,
        DrumId::None,
    ];
    /// Drums a stick can strike.
    pub const PLAYABLE: [DrumId; 5] = [
        DrumId::Snare,
        DrumId::Tom,
        DrumId::Ride,
        DrumId::HiHat,
        DrumId::Crash,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DrumId::Snare => "snare",
            DrumId::Tom => "tom",
            DrumId::Ride => "ride",
            DrumId::HiHat => "hihat",
            DrumId::Crash => "crash",
            DrumId::Kick => "kick",
            DrumId::None => "none",
        }
    }

    pub fn from_name(s: &str) -> Option<DrumId> {
        DrumId::ALL.into_iter().find(|d| d.name() == s.to_ascii_lowercase())
    }
}

/// Which physical kit a score is being folded onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KitLayout {
    FullKit,
    /// Snare + hi-hat only: cymbals fold to the hi-hat, toms to the snare.
    TwoDrum,
}

impl KitLayout {
    pub fn from_name(s: &str) -> Option<KitLayout> {
        match s {
            "full_kit" | "full" => Some(KitLayout::FullKit),
            "two_drum" => Some(KitLayout::TwoDrum),
            _ => None,
        }
    }
}

/// General-MIDI percussion note to drum. `None` means the note is skipped.
pub fn map_percussion(note: u8, layout: KitLayout) -> Option<DrumId> {
    let full = match note {
        38 | 40 => DrumId::Snare,
        45 | 47 | 48 | 50 => DrumId::Tom,
        51 | 59 => DrumId::Ride,
        42 | 44 | 46 => DrumId::HiHat,
        49 | 57 => DrumId::Crash,
        35 | 36 => DrumId::Kick,
        _ => return None,
    };
    Some(match (layout, full) {
        (KitLayout::TwoDrum, DrumId::Crash | DrumId::Ride) => DrumId::HiHat,
        (KitLayout::TwoDrum, DrumId::Tom) => DrumId::Snare,
        (_, d) => d,
    })
}
