use std::collections::HashSet;

use super::ast::{CmpOp, CompoundOp, Cond, Expr, Input, LValue, Program, Stmt};
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

/// Parses Turaco source into its surface AST.
///
/// Besides the grammar, the parser checks that input names are distinct and
/// that every variable is assigned on every path before it is read.
pub fn parse(src: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, defined: HashSet::new() };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    defined: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        let (line, col) = self.here();
        Err(SyntaxError::Parse { line, col, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", self.peek().describe()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) if is_reserved(&name) => {
                self.error(format!("`{name}` is reserved and cannot be used as a variable"))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {}", other.describe())),
        }
    }

    fn index_literal(&mut self) -> Result<usize, SyntaxError> {
        match *self.peek() {
            Tok::Number(v) if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 => {
                self.bump();
                Ok(v as usize)
            }
            ref other => self.error(format!(
                "expected a constant nonnegative integer, found {}",
                other.describe()
            )),
        }
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        self.expect(Tok::Fun, "`fun`")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut inputs: Vec<Input> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let name = self.ident()?;
                let mut dim = 1;
                if self.eat(&Tok::LBracket) {
                    dim = self.index_literal()?;
                    if dim == 0 {
                        return self.error("input dimension must be positive");
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                }
                if inputs.iter().any(|i| i.name == name) {
                    return Err(SyntaxError::DuplicateInput { name });
                }
                self.defined.insert(name.clone());
                inputs.push(Input { name, dim });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let body = self.statements(true)?;
        self.expect(Tok::Return, "`return`")?;
        let mut returns = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            returns.push(self.expr()?);
        }
        self.eat(&Tok::Semi);
        self.expect(Tok::RBrace, "`}`")?;
        if *self.peek() != Tok::Eof {
            return self.error(format!("unexpected {} after program", self.peek().describe()));
        }
        Ok(Program { inputs, body, returns })
    }

    /// Statements up to `return` (at top level) or `}` (in a block).
    fn statements(&mut self, top_level: bool) -> Result<Stmt, SyntaxError> {
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Tok::Return if top_level => break,
                Tok::RBrace if !top_level => break,
                Tok::Eof => return self.error("unexpected end of input"),
                _ => stmts.push(self.statement()?),
            }
        }
        Ok(Stmt::seq(stmts))
    }

    fn block(&mut self) -> Result<Stmt, SyntaxError> {
        self.expect(Tok::LBrace, "`{`")?;
        let s = self.statements(false)?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(s)
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        match self.peek().clone() {
            Tok::Skip => {
                self.bump();
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Skip)
            }
            Tok::If => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.cond()?;
                self.expect(Tok::RParen, "`)`")?;
                let before = self.defined.clone();
                let then_branch = self.block()?;
                let after_then = std::mem::replace(&mut self.defined, before);
                let else_branch = if self.eat(&Tok::Else) {
                    if *self.peek() == Tok::If {
                        self.statement()?
                    } else {
                        self.block()?
                    }
                } else {
                    Stmt::Skip
                };
                self.defined.retain(|v| after_then.contains(v));
                self.eat(&Tok::Semi);
                Ok(Stmt::If(cond, Box::new(then_branch), Box::new(else_branch)))
            }
            Tok::Ident(_) => {
                let (line, col) = self.here();
                let name = self.ident()?;
                let target = if self.eat(&Tok::LBracket) {
                    let k = self.index_literal()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    if self.eat(&Tok::Semi) {
                        if k == 0 {
                            return Err(SyntaxError::Parse {
                                line,
                                col,
                                msg: "vector length must be positive".into(),
                            });
                        }
                        self.defined.insert(name.clone());
                        return Ok(Stmt::VectorDecl(name, k));
                    }
                    LValue::Index(name, k)
                } else {
                    LValue::Var(name)
                };
                let op = match self.bump() {
                    Tok::Assign => None,
                    Tok::PlusAssign => Some(CompoundOp::Add),
                    Tok::MinusAssign => Some(CompoundOp::Sub),
                    Tok::StarAssign => Some(CompoundOp::Mul),
                    Tok::SlashAssign => Some(CompoundOp::Div),
                    other => {
                        self.pos -= 1;
                        return self.error(format!(
                            "expected assignment operator, found {}",
                            other.describe()
                        ));
                    }
                };
                if (op.is_some() || matches!(target, LValue::Index(..)))
                    && !self.defined.contains(target.name())
                {
                    return Err(SyntaxError::Undeclared { name: target.name().to_string(), line, col });
                }
                let e = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                self.defined.insert(target.name().to_string());
                Ok(match op {
                    None => Stmt::Assign(target, e),
                    Some(op) => Stmt::Compound(target, op, e),
                })
            }
            other => self.error(format!("expected statement, found {}", other.describe())),
        }
    }

    fn cond(&mut self) -> Result<Cond, SyntaxError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Gt => CmpOp::Gt,
            other => return self.error(format!("expected `<` or `>`, found {}", other.describe())),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Cond { lhs, op, rhs })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::add(lhs, self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // A minus directly on a literal is a negative constant.
            if let Tok::Number(v) = *self.peek() {
                if !matches!(self.peek_at(1), Tok::LBracket) {
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
            }
            return Ok(Expr::neg(self.unary()?));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary()?;
        while self.eat(&Tok::LBracket) {
            let k = self.index_literal()?;
            self.expect(Tok::RBracket, "`]`")?;
            e = Expr::Index(Box::new(e), k);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBracket => {
                self.bump();
                let mut elems = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    elems.push(self.expr()?);
                }
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Expr::Vector(elems))
            }
            Tok::Ident(name) => match name.as_str() {
                "pi" => {
                    self.bump();
                    Ok(Expr::Const(std::f64::consts::PI))
                }
                "sin" | "cos" | "exp" => {
                    self.bump();
                    let arg = Box::new(self.call_arg()?);
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Exp(arg),
                    })
                }
                "log" => {
                    self.bump();
                    self.expect(Tok::LBrace, "`{` (log requires an expansion point: log{b}(e))")?;
                    let negative = self.eat(&Tok::Minus);
                    let b = match self.bump() {
                        Tok::Number(v) => if negative { -v } else { v },
                        other => {
                            self.pos -= 1;
                            return self.error(format!(
                                "expected constant expansion point, found {}",
                                other.describe()
                            ));
                        }
                    };
                    if b <= 0.0 {
                        return Err(SyntaxError::Parse {
                            line,
                            col,
                            msg: format!("log expansion point must be positive, got {b}"),
                        });
                    }
                    self.expect(Tok::RBrace, "`}`")?;
                    Ok(Expr::Log(b, Box::new(self.call_arg()?)))
                }
                _ => {
                    self.bump();
                    if !self.defined.contains(&name) {
                        return Err(SyntaxError::Undeclared { name, line, col });
                    }
                    Ok(Expr::Var(name))
                }
            },
            other => self.error(format!("expected expression, found {}", other.describe())),
        }
    }

    fn call_arg(&mut self) -> Result<Expr, SyntaxError> {
        self.expect(Tok::LParen, "`(`")?;
        let e = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(e)
    }
}

pub(crate) fn is_reserved(name: &str) -> bool {
    matches!(name, "pi" | "sin" | "cos" | "exp" | "log")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse("fun (x) { skip; return x }").unwrap();
        assert_eq!(p.inputs, vec![Input { name: "x".into(), dim: 1 }]);
        assert_eq!(p.body, Stmt::Skip);
        assert_eq!(p.returns, vec![Expr::var("x")]);
    }

    #[test]
    fn missing_return_expression() {
        let err = parse("fun (x) { return }").unwrap_err();
        assert!(matches!(err, SyntaxError::Parse { line: 1, col: 18, .. }), "{err}");
    }

    #[test]
    fn duplicate_input() {
        assert!(matches!(
            parse("fun (x, x) { return x }"),
            Err(SyntaxError::DuplicateInput { .. })
        ));
    }

    #[test]
    fn undeclared_variable() {
        let err = parse("fun (x) {\n y = z + x;\n return y }").unwrap_err();
        assert_eq!(err, SyntaxError::Undeclared { name: "z".into(), line: 2, col: 6 });
    }

    #[test]
    fn assigned_in_one_branch_only_is_undeclared() {
        let src = "fun (x) { if (x > 0) { y = 1; } else { skip; } return y }";
        assert!(matches!(parse(src), Err(SyntaxError::Undeclared { .. })));
        let ok = "fun (x) { if (x > 0) { y = 1; } else { y = 2; } return y }";
        assert!(parse(ok).is_ok());
    }

    #[test]
    fn negative_literal_folds() {
        let p = parse("fun (x) { return -2 * x }").unwrap();
        assert_eq!(p.returns[0], Expr::mul(Expr::Const(-2.0), Expr::var("x")));
        let p = parse("fun (x) { return -x * x }").unwrap();
        assert_eq!(p.returns[0], Expr::mul(Expr::neg(Expr::var("x")), Expr::var("x")));
    }

    #[test]
    fn vectors_and_indexing() {
        let src = "fun (v[3]) { e[2]; e[0] = v[1]; e[1] = v[2] * 2; return e, [v[0], 1] }";
        let p = parse(src).unwrap();
        assert_eq!(p.inputs[0].dim, 3);
        assert_eq!(p.returns.len(), 2);
        let stmts = p.body.flatten();
        assert_eq!(stmts[0], &Stmt::VectorDecl("e".into(), 2));
    }

    #[test]
    fn log_requires_positive_point() {
        assert!(parse("fun (x) { return log{1}(x) }").is_ok());
        assert!(parse("fun (x) { return log{0}(x) }").is_err());
        assert!(parse("fun (x) { return log(x) }").is_err());
    }

    #[test]
    fn else_if_chains() {
        let src = "fun (x) { if (x < 0) { y = 0; } else if (x < 1) { y = 1; } else { y = 2; } return y }";
        let p = parse(src).unwrap();
        assert_eq!(p.body.if_count(), 2);
    }

    #[test]
    fn reserved_names_rejected() {
        assert!(parse("fun (pi) { return pi }").is_err());
    }
}
