use thiserror::Error;

/// Address-space layout: a read-only code region followed by a data region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryLayout {
    pub code_base: u32,
    pub code_size: u32,
    pub data_base: u32,
    pub data_size: u32,
}

impl MemoryLayout {
    pub const fn code_end(&self) -> u32 {
        self.code_base + self.code_size
    }

    pub const fn data_end(&self) -> u32 {
        self.data_base + self.data_size
    }

    pub fn in_code(&self, addr: u32) -> bool {
        addr >= self.code_base && addr < self.code_end()
    }

    pub fn in_data(&self, addr: u32) -> bool {
        addr >= self.data_base && addr < self.data_end()
    }
}

impl Default for MemoryLayout {
    /// 64 KiB of code at 0x0000_0000 followed by 64 KiB of data.
    fn default() -> Self {
        MemoryLayout {
            code_base: 0,
            code_size: 0x1_0000,
            data_base: 0x1_0000,
            data_size: 0x1_0000,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("code length {0} is not a multiple of 4")]
    UnalignedCode(usize),
    #[error("code segment of {len} bytes exceeds the {size}-byte code region")]
    CodeTooLarge { len: usize, size: u32 },
    #[error("data segment of {len} bytes exceeds the {size}-byte data region")]
    DataTooLarge { len: usize, size: u32 },
    #[error("address {0:#010x} is outside the data segment")]
    OutOfBounds(u32),
}

/// A loadable program: code bytes placed at `code_base`, data bytes placed
/// at `data_base`. Words are stored big-endian.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MemoryImage {
    pub code_base: u32,
    pub code: Vec<u8>,
    pub data_base: u32,
    pub data: Vec<u8>,
}

impl MemoryImage {
    pub fn new(code: Vec<u8>, data: Vec<u8>, layout: &MemoryLayout) -> Result<Self, ImageError> {
        let image = MemoryImage {
            code_base: layout.code_base,
            code,
            data_base: layout.data_base,
            data,
        };
        image.validate(layout)?;
        Ok(image)
    }

    pub fn validate(&self, layout: &MemoryLayout) -> Result<(), ImageError> {
        if !self.code.len().is_multiple_of(4) {
            return Err(ImageError::UnalignedCode(self.code.len()));
        }
        if self.code.len() as u64 > layout.code_size as u64 {
            return Err(ImageError::CodeTooLarge {
                len: self.code.len(),
                size: layout.code_size,
            });
        }
        if self.data.len() as u64 > layout.data_size as u64 {
            return Err(ImageError::DataTooLarge {
                len: self.data.len(),
                size: layout.data_size,
            });
        }
        Ok(())
    }

    pub fn code_words(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        words(&self.code, self.code_base)
    }

    pub fn data_words(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        words(&self.data, self.data_base)
    }

    /// Reads a code word; addresses past the assembled code read as zero.
    pub fn code_word(&self, addr: u32) -> Option<u32> {
        let off = addr.checked_sub(self.code_base)? as usize;
        if !addr.is_multiple_of(4) {
            return None;
        }
        Some(
            self.code
                .get(off..off + 4)
                .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
                .unwrap_or(0),
        )
    }

    /// Overwrites a data word, growing the data segment if needed.
    pub fn set_data_word(&mut self, addr: u32, value: u32, layout: &MemoryLayout) -> Result<(), ImageError> {
        if !addr.is_multiple_of(4) || !layout.in_data(addr) || !layout.in_data(addr + 3) {
            return Err(ImageError::OutOfBounds(addr));
        }
        let off = (addr - self.data_base) as usize;
        if self.data.len() < off + 4 {
            self.data.resize(off + 4, 0);
        }
        self.data[off..off + 4].copy_from_slice(&value.to_be_bytes());
        Ok(())
    }

    /// Flat binary: code from `code_base`, then (if any data) zero padding up
    /// to `data_base` followed by the data bytes.
    pub fn to_flat(&self) -> Vec<u8> {
        let mut out = self.code.clone();
        if !self.data.is_empty() {
            out.resize((self.data_base - self.code_base) as usize, 0);
            out.extend_from_slice(&self.data);
        }
        out
    }

    /// Inverse of [`MemoryImage::to_flat`]. Trailing zero words of the code
    /// part are dropped; they read as `NOP` either way.
    pub fn from_flat(bytes: &[u8], layout: &MemoryLayout) -> Result<Self, ImageError> {
        let split = ((layout.data_base - layout.code_base) as usize).min(bytes.len());
        let (code, data) = bytes.split_at(split);
        let mut code = code.to_vec();
        if code.len() % 4 != 0 {
            return Err(ImageError::UnalignedCode(code.len()));
        }
        while code.len() >= 4 && code[code.len() - 4..].iter().all(|&b| b == 0) {
            code.truncate(code.len() - 4);
        }
        MemoryImage::new(code, data.to_vec(), layout)
    }
}

fn words(bytes: &[u8], base: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
    bytes.chunks(4).enumerate().map(move |(i, c)| {
        let mut w = [0u8; 4];
        w[..c.len()].copy_from_slice(c);
        (base + 4 * i as u32, u32::from_be_bytes(w))
    })
}
