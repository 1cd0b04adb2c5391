//! Embedding of de Bruijn addresses into IPv4 prefixes: base prefix, then
//! `s = ceil(log2 b)` bits per address symbol (most significant symbol
//! first), then host bits.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::debruijn::Address;

#[derive(Debug, Error, PartialEq)]
pub enum IpError {
    #[error("tor bits do not fit: base /{base_len} + {tor_bits} symbol bits exceed 32")]
    AddressTooNarrow { base_len: u8, tor_bits: u8 },
    #[error("host index {index} does not fit in {bits} host bits")]
    HostOverflow { index: u32, bits: u8 },
    #[error("address does not match the scheme's alphabet or dimension")]
    SchemeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpAddressingScheme {
    base: u32,
    base_len: u8,
    b: usize,
    d: usize,
    bits_per_symbol: u8,
}

impl IpAddressingScheme {
    pub fn new(base: Ipv4Addr, base_len: u8, b: usize, d: usize) -> Result<Self, IpError> {
        let bits_per_symbol = (usize::BITS - (b - 1).leading_zeros()) as u8;
        let tor_bits = bits_per_symbol * d as u8;
        if base_len as u32 + tor_bits as u32 > 32 {
            return Err(IpError::AddressTooNarrow { base_len, tor_bits });
        }
        let mask = if base_len == 0 { 0 } else { u32::MAX << (32 - base_len) };
        Ok(IpAddressingScheme {
            base: u32::from(base) & mask,
            base_len,
            b,
            d,
            bits_per_symbol,
        })
    }

    pub fn bits_per_symbol(&self) -> u8 {
        self.bits_per_symbol
    }

    pub fn host_bits(&self) -> u8 {
        32 - self.base_len - self.bits_per_symbol * self.d as u8
    }

    /// The prefix owned by a partial (or full) symbol sequence; length grows
    /// by `bits_per_symbol` per concrete symbol.
    pub fn prefix_for(&self, symbols: &[u8]) -> Result<(Ipv4Addr, u8), IpError> {
        if symbols.len() > self.d || symbols.iter().any(|&s| s as usize >= self.b) {
            return Err(IpError::SchemeMismatch);
        }
        let mut bits = self.base;
        let mut len = self.base_len;
        for &s in symbols {
            bits |= (s as u32) << (32 - len - self.bits_per_symbol);
            len += self.bits_per_symbol;
        }
        Ok((Ipv4Addr::from(bits), len))
    }

    /// The /(p + s*d) prefix assigned to a ToR.
    pub fn tor_prefix(&self, tor: &Address) -> Result<(Ipv4Addr, u8), IpError> {
        if tor.b() != self.b || tor.d() != self.d {
            return Err(IpError::SchemeMismatch);
        }
        self.prefix_for(tor.symbols())
    }

    pub fn address_to_ip(&self, tor: &Address, host_index: u32) -> Result<Ipv4Addr, IpError> {
        let (net, len) = self.tor_prefix(tor)?;
        let host_bits = 32 - len;
        if host_bits < 32 && host_index >= 1u32 << host_bits {
            return Err(IpError::HostOverflow {
                index: host_index,
                bits: host_bits,
            });
        }
        Ok(Ipv4Addr::from(u32::from(net) | host_index))
    }
}
