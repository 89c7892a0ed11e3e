//! Document lifecycle states and the allowed edges between them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DocumentState {
    Created,
    RecognitionStarted,
    FactsCollected,
    NotarizationAwaiting,
    NotarizationStarted,
    ObfuscationStarted,
    ToBeUploaded,
    Completed,
    Failed,
}

impl DocumentState {
    pub const ALL: [DocumentState; 9] = [
        DocumentState::Created,
        DocumentState::RecognitionStarted,
        DocumentState::FactsCollected,
        DocumentState::NotarizationAwaiting,
        DocumentState::NotarizationStarted,
        DocumentState::ObfuscationStarted,
        DocumentState::ToBeUploaded,
        DocumentState::Completed,
        DocumentState::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocumentState::Created => "CREATED",
            DocumentState::RecognitionStarted => "RECOGNITION_STARTED",
            DocumentState::FactsCollected => "FACTS_COLLECTED",
            DocumentState::NotarizationAwaiting => "NOTARIZATION_AWAITING",
            DocumentState::NotarizationStarted => "NOTARIZATION_STARTED",
            DocumentState::ObfuscationStarted => "OBFUSCATION_STARTED",
            DocumentState::ToBeUploaded => "TO_BE_UPLOADED",
            DocumentState::Completed => "COMPLETED",
            DocumentState::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, DocumentState::Completed | DocumentState::Failed)
    }

    /// The single forward successor, if any.
    pub fn next(self) -> Option<Self> {
        use DocumentState::*;
        match self {
            Created => Some(RecognitionStarted),
            RecognitionStarted => Some(FactsCollected),
            FactsCollected => Some(NotarizationAwaiting),
            NotarizationAwaiting => Some(NotarizationStarted),
            NotarizationStarted => Some(ObfuscationStarted),
            ObfuscationStarted => Some(ToBeUploaded),
            ToBeUploaded => Some(Completed),
            Completed | Failed => None,
        }
    }

    /// Forward edges plus any non-terminal state to FAILED.
    pub fn can_transition(self, to: DocumentState) -> bool {
        !self.is_terminal() && (self.next() == Some(to) || to == DocumentState::Failed)
    }

    /// Name of the workflow step executed while in this state.
    pub fn step(self) -> Option<Step> {
        match self {
            DocumentState::RecognitionStarted => Some(Step::Extract),
            DocumentState::FactsCollected => Some(Step::QueueNotary),
            DocumentState::NotarizationStarted => Some(Step::Obfuscate),
            DocumentState::ObfuscationStarted => Some(Step::Upload),
            DocumentState::ToBeUploaded => Some(Step::Anchor),
            _ => None,
        }
    }
}

impl std::fmt::Display for DocumentState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Extract,
    QueueNotary,
    Obfuscate,
    Upload,
    Anchor,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Extract => "extract",
            Step::QueueNotary => "queue_notary",
            Step::Obfuscate => "obfuscate",
            Step::Upload => "upload",
            Step::Anchor => "anchor",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_states_absorb() {
        for to in DocumentState::ALL {
            assert!(!DocumentState::Completed.can_transition(to));
            assert!(!DocumentState::Failed.can_transition(to));
        }
    }

    #[test]
    fn forward_chain_reaches_completed() {
        let mut s = DocumentState::Created;
        let mut seen = vec![s];
        while let Some(n) = s.next() {
            assert!(s.can_transition(n));
            s = n;
            seen.push(s);
        }
        assert_eq!(s, DocumentState::Completed);
        assert_eq!(seen.len(), 8);
        assert!(!DocumentState::Created.can_transition(DocumentState::Completed));
        assert!(DocumentState::ObfuscationStarted.can_transition(DocumentState::Failed));
    }

    #[test]
    fn names_round_trip() {
        for s in DocumentState::ALL {
            assert_eq!(DocumentState::parse(s.as_str()), Some(s));
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
    }
}
