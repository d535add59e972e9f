#pragma once

// Internal lexing/parsing helpers shared by the term, reduction-expression,
// and structure-file parsers.  Not installed.

#include <cctype>
#include <string>
#include <utility>
#include <vector>

#include "cohere/terms.hpp"

namespace cohere::detail {

struct Token {
  enum class Kind { Ident, LParen, RParen, Comma, Semi, IdMark, End } kind;
  std::string text;
  int line;
  int col;
};

// Whitespace-skipping lexer with line/column tracking.  Identifiers are
// [A-Za-z_][A-Za-z0-9_]*; "1_" lexes as the identity marker.
class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    int line = line_, col = col_;
    if (pos_ >= text_.size()) {
      tok_ = {Token::Kind::End, "", line, col};
      return;
    }
    char c = text_[pos_];
    if (c == '(') {
      ++pos_, ++col_;
      tok_ = {Token::Kind::LParen, "(", line, col};
    } else if (c == ')') {
      ++pos_, ++col_;
      tok_ = {Token::Kind::RParen, ")", line, col};
    } else if (c == ',') {
      ++pos_, ++col_;
      tok_ = {Token::Kind::Comma, ",", line, col};
    } else if (c == ';') {
      ++pos_, ++col_;
      tok_ = {Token::Kind::Semi, ";", line, col};
    } else if (c == '1') {
      if (pos_ + 1 >= text_.size() || text_[pos_ + 1] != '_')
        throw ParseError("expected '_' after '1'", line, col);
      pos_ += 2, col_ += 2;
      tok_ = {Token::Kind::IdMark, "1_", line, col};
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string ident;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_')) {
        ident += text_[pos_];
        ++pos_, ++col_;
      }
      tok_ = {Token::Kind::Ident, std::move(ident), line, col};
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line,
                       col);
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_{Token::Kind::End, "", 1, 1};
};

// Recursive-descent term parser over a borrowed lexer, so surrounding
// grammars (reduction expressions, structure files) can parse embedded
// terms and continue with the remaining tokens.
class TermParser {
 public:
  TermParser(const Signature& sig, Lexer& lex) : sig_(sig), lex_(lex) {}

  Term parse_full() {
    Term t = term();
    const Token& end = lex_.peek();
    if (end.kind != Token::Kind::End)
      throw ParseError("trailing input after term", end.line, end.col);
    return t;
  }

  Term term() {
    const Token tok = lex_.next();
    if (tok.kind == Token::Kind::Ident) return ident_term(tok);
    if (tok.kind == Token::Kind::LParen) {
      Term lhs = term();
      const Token op = lex_.next();
      if (op.kind != Token::Kind::Ident)
        throw ParseError("expected infix symbol", op.line, op.col);
      const SymbolInfo* info = sig_.symbol(op.text);
      if (!info || !info->infix)
        throw ParseError("not an infix symbol: " + op.text, op.line, op.col);
      Term rhs = term();
      const Token close = lex_.next();
      if (close.kind != Token::Kind::RParen)
        throw ParseError("expected ')'", close.line, close.col);
      return Term::app(op.text, {std::move(lhs), std::move(rhs)});
    }
    throw ParseError("expected term", tok.line, tok.col);
  }

 private:
  Term ident_term(const Token& tok) {
    const SymbolInfo* info = sig_.symbol(tok.text);
    if (lex_.peek().kind == Token::Kind::LParen) {
      if (!info)
        throw ParseError("unknown symbol " + tok.text, tok.line, tok.col);
      lex_.next();  // consume '('
      std::vector<Term> args;
      if (lex_.peek().kind != Token::Kind::RParen) {
        args.push_back(term());
        while (lex_.peek().kind == Token::Kind::Comma) {
          lex_.next();
          args.push_back(term());
        }
      }
      const Token close = lex_.next();
      if (close.kind != Token::Kind::RParen)
        throw ParseError("expected ')'", close.line, close.col);
      return Term::app(tok.text, std::move(args));
    }
    if (info) {
      if (info->arity != 0)
        throw ParseError("symbol " + tok.text + " used without arguments",
                         tok.line, tok.col);
      return Term::app(tok.text, {});
    }
    if (sig_.is_generator(tok.text)) return Term::gen(tok.text);
    return Term::var(tok.text);
  }

  const Signature& sig_;
  Lexer& lex_;
};

}  // namespace cohere::detail
