//! Constant evaluation of EVM operations over 256-bit words. Shared by the
//! jump-resolution abstract stack and SSA constant folding.

use primitive_types::{U256, U512};

use crate::bytecode::opcodes as op;

const SIGN_BIT: usize = 255;

fn is_neg(x: U256) -> bool {
    x.bit(SIGN_BIT)
}

fn neg(x: U256) -> U256 {
    (!x).overflowing_add(U256::one()).0
}

fn abs(x: U256) -> U256 {
    if is_neg(x) {
        neg(x)
    } else {
        x
    }
}

/// Evaluate one opcode over constant operands (pop order). Returns None when
/// the opcode is not a pure word computation or an operand is unknown.
pub fn eval(opcode: u8, operands: &[Option<U256>]) -> Option<U256> {
    let a = |i: usize| operands.get(i).copied().flatten();
    let bin = |f: fn(U256, U256) -> U256| Some(f(a(0)?, a(1)?));
    match opcode {
        op::ADD => bin(|x, y| x.overflowing_add(y).0),
        op::MUL => bin(|x, y| x.overflowing_mul(y).0),
        op::SUB => bin(|x, y| x.overflowing_sub(y).0),
        op::DIV => bin(|x, y| if y.is_zero() { U256::zero() } else { x / y }),
        op::SDIV => bin(|x, y| {
            if y.is_zero() {
                U256::zero()
            } else {
                let q = abs(x) / abs(y);
                if is_neg(x) != is_neg(y) {
                    neg(q)
                } else {
                    q
                }
            }
        }),
        op::MOD => bin(|x, y| if y.is_zero() { U256::zero() } else { x % y }),
        op::SMOD => bin(|x, y| {
            if y.is_zero() {
                U256::zero()
            } else {
                let r = abs(x) % abs(y);
                if is_neg(x) {
                    neg(r)
                } else {
                    r
                }
            }
        }),
        op::ADDMOD => {
            let (x, y, m) = (a(0)?, a(1)?, a(2)?);
            Some(if m.is_zero() {
                U256::zero()
            } else {
                let s = U512::from(x) + U512::from(y);
                U256::try_from(s % U512::from(m)).unwrap_or_default()
            })
        }
        op::MULMOD => {
            let (x, y, m) = (a(0)?, a(1)?, a(2)?);
            Some(if m.is_zero() {
                U256::zero()
            } else {
                U256::try_from(x.full_mul(y) % U512::from(m)).unwrap_or_default()
            })
        }
        op::EXP => bin(|x, y| x.overflowing_pow(y).0),
        op::SIGNEXTEND => bin(|k, x| {
            if k >= U256::from(31u8) {
                return x;
            }
            let bit = k.as_usize() * 8 + 7;
            if x.bit(bit) {
                x | (U256::MAX << (bit + 1))
            } else {
                x & !(U256::MAX << (bit + 1))
            }
        }),
        op::LT => bin(|x, y| U256::from((x < y) as u8)),
        op::GT => bin(|x, y| U256::from((x > y) as u8)),
        op::SLT => bin(|x, y| {
            let r = match (is_neg(x), is_neg(y)) {
                (true, false) => true,
                (false, true) => false,
                _ => x < y,
            };
            U256::from(r as u8)
        }),
        op::SGT => bin(|x, y| {
            let r = match (is_neg(x), is_neg(y)) {
                (true, false) => false,
                (false, true) => true,
                _ => x > y,
            };
            U256::from(r as u8)
        }),
        op::EQ => bin(|x, y| U256::from((x == y) as u8)),
        op::ISZERO => Some(U256::from(a(0)?.is_zero() as u8)),
        op::AND => bin(|x, y| x & y),
        op::OR => bin(|x, y| x | y),
        op::XOR => bin(|x, y| x ^ y),
        op::NOT => Some(!a(0)?),
        op::BYTE => bin(|i, x| {
            if i >= U256::from(32u8) {
                U256::zero()
            } else {
                U256::from(x.byte(31 - i.as_usize()))
            }
        }),
        op::SHL => bin(|shift, x| {
            if shift >= U256::from(256u16) {
                U256::zero()
            } else {
                x << shift.as_usize()
            }
        }),
        op::SHR => bin(|shift, x| {
            if shift >= U256::from(256u16) {
                U256::zero()
            } else {
                x >> shift.as_usize()
            }
        }),
        op::SAR => bin(|shift, x| {
            if shift >= U256::from(256u16) {
                if is_neg(x) {
                    U256::MAX
                } else {
                    U256::zero()
                }
            } else {
                let s = shift.as_usize();
                let logical = x >> s;
                if is_neg(x) && s > 0 {
                    logical | (U256::MAX << (256 - s))
                } else {
                    logical
                }
            }
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: u64) -> Option<U256> {
        Some(U256::from(v))
    }

    #[test]
    fn folds_add_and_shifts() {
        assert_eq!(eval(op::ADD, &[c(2), c(3)]), c(5));
        assert_eq!(eval(op::SHR, &[c(8), c(0xff00)]), c(0xff));
        assert_eq!(eval(op::SHL, &[c(4), c(1)]), c(16));
        assert_eq!(eval(op::DIV, &[c(7), c(0)]), c(0));
    }

    #[test]
    fn signed_ops_match_twos_complement() {
        let minus_one = !U256::zero();
        assert_eq!(eval(op::SDIV, &[Some(minus_one), c(1)]), Some(minus_one));
        // -7 / 2 = -3 (truncated toward zero)
        let minus_seven = neg(U256::from(7u8));
        assert_eq!(
            eval(op::SDIV, &[Some(minus_seven), c(2)]),
            Some(neg(U256::from(3u8)))
        );
        assert_eq!(eval(op::SLT, &[Some(minus_one), c(0)]), c(1));
        assert_eq!(eval(op::SGT, &[Some(minus_one), c(0)]), c(0));
        // SAR of a negative fills with ones
        assert_eq!(eval(op::SAR, &[c(1), Some(minus_one)]), Some(minus_one));
    }

    #[test]
    fn byte_indexing_is_big_endian() {
        let x = U256::from_big_endian(&{
            let mut b = [0u8; 32];
            b[0] = 0xaa;
            b[31] = 0xbb;
            b
        });
        assert_eq!(eval(op::BYTE, &[c(0), Some(x)]), c(0xaa));
        assert_eq!(eval(op::BYTE, &[c(31), Some(x)]), c(0xbb));
        assert_eq!(eval(op::BYTE, &[c(32), Some(x)]), c(0));
    }

    #[test]
    fn unknown_operand_stops_folding() {
        assert_eq!(eval(op::ADD, &[c(1), None]), None);
        assert_eq!(eval(op::CALLDATALOAD, &[c(0)]), None);
    }
}
