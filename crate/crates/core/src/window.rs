use crate::transcript::Conversation;

/// Indices `j` with `i < j <= i + k` spoken by someone other than the speaker
/// of `i`. Same-speaker turns still count toward the distance `k`.
pub fn future_window(conversation: &Conversation, i: usize, k: usize) -> impl Iterator<Item = usize> + '_ {
    let speaker = conversation.speaker(i);
    let end = i.saturating_add(k).min(conversation.len().saturating_sub(1));
    (i + 1..=end).filter(move |&j| conversation.speaker(j) != speaker)
}
