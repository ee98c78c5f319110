//! Terminal session in which a person answers the questioner.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::game::{rollout, Agents, Answerer, GameConfig, GameError, GameSet, GameTranscript, Mode};
use crate::tape::Tape;

#[derive(Debug, Error)]
pub enum PlayError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("input ended before the game finished")]
    InputClosed,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads one line; `None` at end of input.
fn read_line(input: &mut dyn BufRead) -> std::io::Result<Option<String>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_lowercase()))
}

/// Maps an answer to a bit; anything but y/n is rejected.
pub fn parse_answer(s: &str) -> Option<bool> {
    match s.trim().to_lowercase().as_str() {
        "y" | "yes" => Some(true),
        "n" | "no" => Some(false),
        _ => None,
    }
}

fn ask_answer(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    round: usize,
    question: &str,
) -> Result<bool, PlayError> {
    loop {
        write!(
            output,
            "Round {}: is \"{}\" in your sentence? [y/n] ",
            round + 1,
            question
        )?;
        output.flush()?;
        let line = read_line(input)?.ok_or(PlayError::InputClosed)?;
        match parse_answer(&line) {
            Some(b) => return Ok(b),
            None => writeln!(output, "Please answer y or n.")?,
        }
    }
}

fn ask_target(input: &mut dyn BufRead, output: &mut dyn Write, n: usize) -> Result<usize, PlayError> {
    loop {
        write!(output, "Which sentence did you pick? [1-{n}] ")?;
        output.flush()?;
        let line = read_line(input)?.ok_or(PlayError::InputClosed)?;
        match line.parse::<usize>() {
            Ok(k) if (1..=n).contains(&k) => return Ok(k - 1),
            _ => writeln!(output, "Please enter a number from 1 to {n}.")?,
        }
    }
}

/// Shows the candidates, lets the questioner ask its questions, takes
/// y/n answers from `input`, prints the guess and finally asks which
/// sentence was chosen. Responses are recorded as human-sourced.
#[allow(clippy::too_many_arguments)]
pub fn play_interactive(
    agents: &Agents,
    set: &GameSet,
    sentences: &[String],
    cfg: &GameConfig,
    table: &EmbeddingTable,
    seed: u64,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<GameTranscript, PlayError> {
    writeln!(output, "Pick one of these sentences and keep it secret:")?;
    for (i, s) in sentences.iter().enumerate() {
        writeln!(output, "  {}. {}", i + 1, s)?;
    }

    let mut failure: Option<PlayError> = None;
    let mut answer = |round: usize, ids: &[usize]| -> bool {
        if failure.is_some() {
            return false;
        }
        let question = ids.iter().map(|&i| table.token(i)).collect::<Vec<_>>().join(" ");
        match ask_answer(input, output, round, &question) {
            Ok(b) => b,
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    };
    let snapshot = agents.snapshot();
    let mut tape = Tape::new();
    let played = rollout(
        &mut tape,
        agents,
        &snapshot,
        set,
        0,
        cfg,
        Mode::Eval,
        seed,
        Answerer::External(&mut answer),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut transcript = played.transcript;
    transcript.decode(table);

    writeln!(
        output,
        "My guess: sentence {}: {}",
        transcript.guess + 1,
        sentences[transcript.guess]
    )?;
    transcript.target = ask_target(input, output, sentences.len())?;
    transcript.correct = transcript.guess == transcript.target;
    writeln!(output, "{}", if transcript.correct { "Got it." } else { "Missed." })?;
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_map_to_bits() {
        assert_eq!(parse_answer("y"), Some(true));
        assert_eq!(parse_answer(" No "), Some(false));
        assert_eq!(parse_answer("maybe"), None);
        assert_eq!(parse_answer(""), None);
    }
}
