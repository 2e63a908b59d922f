//! Token stream serialization: whitespace text and 32-bit-id binary with a
//! vocabulary sidecar.
//!
//! In the text form a linebreak token is written as an actual newline, so a
//! serialized jg stream looks exactly like the gak lines of a piece file.

use crate::notation::{frac_text, parse_frac, Instrument, PitchSymbol, PositionLabel};

use super::{CodecError, Scheme, Special, Token, TokenStream, Vocabulary};

/// Canonical spelling of one token. The linebreak token is spelled `\n`
/// (backslash-n), which only appears in vocabulary sidecars; stream text uses
/// real newlines.
pub fn token_text(token: &Token) -> String {
    match token {
        Token::Bar => "|".to_string(),
        Token::LineBreak => "\\n".to_string(),
        Token::Position(l) => l.value().to_string(),
        Token::BeatPos(f) => frac_text(*f),
        Token::Pitch(p) => p.token(),
        Token::Duration(f) => frac_text(*f),
        Token::Rest => "x".to_string(),
        Token::TimedSigimsae(id) => format!("s:{}", id),
        Token::Ornament(id) => format!("~{}", id),
        Token::Special(s) => match s {
            Special::Start => "<start>".to_string(),
            Special::End => "<end>".to_string(),
            Special::Pad => "<pad>".to_string(),
            Special::Mask => "<mask>".to_string(),
            Special::Instrument(i) => format!("<{}>", i.name()),
        },
    }
}

fn parse_token(text: &str, scheme: Scheme) -> Result<Token, CodecError> {
    let bad = |msg: String| CodecError::UnexpectedToken { index: 0, what: msg, scheme };
    match text {
        "|" => return Ok(Token::Bar),
        "\\n" => return Ok(Token::LineBreak),
        "x" => return Ok(Token::Rest),
        "<start>" => return Ok(Token::Special(Special::Start)),
        "<end>" => return Ok(Token::Special(Special::End)),
        "<pad>" => return Ok(Token::Special(Special::Pad)),
        "<mask>" => return Ok(Token::Special(Special::Mask)),
        _ => {}
    }
    if let Some(inner) = text.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
        if let Some(instrument) = Instrument::from_name(inner) {
            return Ok(Token::Special(Special::Instrument(instrument)));
        }
        return Err(bad(format!("unknown special '{}'", text)));
    }
    if let Some(id) = text.strip_prefix("s:") {
        return Ok(Token::TimedSigimsae(id.to_string()));
    }
    if let Some(id) = text.strip_prefix('~') {
        return Ok(Token::Ornament(id.to_string()));
    }
    // numeric payloads are scheme-dependent
    if text.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return match scheme {
            Scheme::Jg => {
                let v: u8 = text.parse().map_err(|_| bad(format!("bad position '{}'", text)))?;
                Ok(Token::Position(PositionLabel::new(v)?))
            }
            Scheme::Remi => {
                let f = parse_frac(text).ok_or_else(|| bad(format!("bad beat position '{}'", text)))?;
                Ok(Token::BeatPos(f))
            }
            Scheme::Abc => {
                let f = parse_frac(text).ok_or_else(|| bad(format!("bad duration '{}'", text)))?;
                Ok(Token::Duration(f))
            }
        };
    }
    match PitchSymbol::parse_token(text) {
        Some(p) => Ok(Token::Pitch(p)),
        None => Err(bad(format!("unknown token '{}'", text))),
    }
}

pub fn stream_to_text(stream: &TokenStream) -> String {
    let mut out = String::new();
    let mut line_has_tokens = false;
    for token in &stream.tokens {
        if matches!(token, Token::LineBreak) {
            out.push('\n');
            line_has_tokens = false;
        } else {
            if line_has_tokens {
                out.push(' ');
            }
            out.push_str(&token_text(token));
            line_has_tokens = true;
        }
    }
    out
}

pub fn stream_from_text(text: &str, scheme: Scheme) -> Result<TokenStream, CodecError> {
    let mut tokens = Vec::new();
    let lines: Vec<&str> = text.split('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        for word in line.split_whitespace() {
            tokens.push(parse_token(word, scheme)?);
        }
        if i + 1 < lines.len() {
            tokens.push(Token::LineBreak);
        }
    }
    Ok(TokenStream::new(scheme, tokens))
}

/// Little-endian u32 ids, in stream order.
pub fn write_stream_binary(
    stream: &TokenStream,
    vocab: &Vocabulary,
) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(stream.len() * 4);
    for token in &stream.tokens {
        let id = vocab
            .id(token)
            .ok_or_else(|| CodecError::NotInVocab(token_text(token)))?;
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

pub fn read_stream_binary(bytes: &[u8], vocab: &Vocabulary) -> Result<TokenStream, CodecError> {
    if bytes.len() % 4 != 0 {
        return Err(CodecError::UnexpectedToken {
            index: bytes.len(),
            what: "binary stream length not a multiple of 4".into(),
            scheme: vocab.scheme(),
        });
    }
    let mut tokens = Vec::with_capacity(bytes.len() / 4);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let id = u32::from_le_bytes(chunk.try_into().unwrap());
        let token = vocab
            .token(id)
            .ok_or_else(|| CodecError::UnexpectedToken {
                index: i,
                what: format!("id {} outside vocabulary", id),
                scheme: vocab.scheme(),
            })?;
        tokens.push(token.clone());
    }
    Ok(TokenStream::new(vocab.scheme(), tokens))
}

/// Sidecar format: `#scheme: <name>` then one token spelling per line, in id
/// order.
pub fn vocab_to_text(vocab: &Vocabulary) -> String {
    let mut out = format!("#scheme: {}\n", vocab.scheme().name());
    for token in vocab.tokens() {
        out.push_str(&token_text(token));
        out.push('\n');
    }
    out
}

pub fn vocab_from_text(text: &str) -> Result<Vocabulary, CodecError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let scheme = header
        .strip_prefix("#scheme: ")
        .and_then(Scheme::from_name)
        .ok_or_else(|| CodecError::UnexpectedToken {
            index: 0,
            what: format!("bad vocabulary header '{}'", header),
            scheme: Scheme::Jg,
        })?;
    let mut tokens = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        tokens.push(parse_token(line, scheme)?);
    }
    Ok(Vocabulary::from_tokens(scheme, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::{build_vocab, encode_abc, encode_jg, encode_remi};
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn text_round_trip_all_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..50 {
            let score = random_score(&mut rng, &SynthConfig::default());
            let part = &score.parts[0];
            for stream in [encode_jg(part), encode_remi(part), encode_abc(part).unwrap()] {
                let text = stream_to_text(&stream);
                let back = stream_from_text(&text, stream.scheme).unwrap();
                assert_eq!(back, stream);
            }
        }
    }

    #[test]
    fn binary_round_trip_with_sidecar() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let score = random_score(&mut rng, &SynthConfig::default());
        let parts: Vec<_> = score.parts.clone();
        let vocab = build_vocab(&parts, Scheme::Jg);
        let stream = encode_jg(&parts[0]);

        let bytes = write_stream_binary(&stream, &vocab).unwrap();
        assert_eq!(bytes.len(), stream.len() * 4);

        let sidecar = vocab_to_text(&vocab);
        let vocab2 = vocab_from_text(&sidecar).unwrap();
        assert_eq!(vocab2, vocab);

        let back = read_stream_binary(&bytes, &vocab2).unwrap();
        assert_eq!(back, stream);
    }

    #[test]
    fn unknown_token_fails_binary_write() {
        let vocab = build_vocab([] as [&crate::notation::Part; 0], Scheme::Jg);
        let stream = TokenStream::new(Scheme::Jg, vec![Token::TimedSigimsae("zz".into())]);
        assert!(matches!(
            write_stream_binary(&stream, &vocab),
            Err(CodecError::NotInVocab(_))
        ));
    }
}
