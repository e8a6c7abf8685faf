//! C ABI for `pcpshare`.
//!
//! Every fallible function returns a [`PcpStatus`] and writes results through
//! out pointers. Handles are opaque; each one is owned by the caller until it
//! is passed to its `_free` function. After a failure, [`pcp_last_error`]
//! describes it for the calling thread.
//!
//! Handles are not synchronized. Share one across threads only with external
//! locking.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pcpshare::matching::DemandPolicy;
use pcpshare::orchestrator::{Market, MarketConfig, Phase};
use pcpshare::paillier::{keygen, Ciphertext, GeneratorMode, PaillierError, PrivateKey, PublicKey};
use pcpshare::protocol::Scenario;
use pcpshare::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    KeyMismatch = 3,
    OutOfRange = 4,
    Crypto = 5,
    Protocol = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub const PCP_MODE_RANDOM_G: u32 = 0;
pub const PCP_MODE_N_PLUS_ONE: u32 = 1;

pub const PCP_POLICY_RELAXED: u32 = 0;
pub const PCP_POLICY_STRICT: u32 = 1;

pub const PCP_KEY_ID_LEN: usize = 16;

/// A Paillier key pair plus the randomness used for its encryptions.
pub struct PcpKeyPair {
    pk: PublicKey,
    sk: PrivateKey,
    rng: ChaCha20Rng,
}

pub struct PcpCiphertext(Ciphertext);

pub struct PcpMarket(Market);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcpMarketConfig {
    /// Round key size in bits.
    pub bits: u32,
    /// `PCP_POLICY_*`.
    pub policy: u32,
    pub proxies: u32,
    pub seed: u64,
}

/// One match. The index is 128 bits wide, split into halves.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcpMatch {
    pub buyer_id: u32,
    pub seller_id: u32,
    pub round: u32,
    pub w_index_hi: u64,
    pub w_index_lo: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(PcpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Paillier(p) => paillier_status(p),
            Error::InvalidProfile { .. }
            | Error::InvalidScenario(_)
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch(..)
            | Error::InvalidDemandSum(_) => PcpStatus::InvalidArgument,
            _ => PcpStatus::Protocol,
        };
        Fail(status, e.to_string())
    }
}

impl From<PaillierError> for Fail {
    fn from(e: PaillierError) -> Self {
        Fail(paillier_status(&e), e.to_string())
    }
}

fn paillier_status(e: &PaillierError) -> PcpStatus {
    match e {
        PaillierError::KeyMismatch { .. } => PcpStatus::KeyMismatch,
        PaillierError::PlaintextOutOfRange
        | PaillierError::SignedOutOfRange
        | PaillierError::CiphertextOutOfRange => PcpStatus::OutOfRange,
        PaillierError::InvalidKeySize { .. } => PcpStatus::InvalidArgument,
        _ => PcpStatus::Crypto,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PcpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PcpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PcpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn market_config(c: &PcpMarketConfig) -> Result<MarketConfig, Fail> {
    let policy = match c.policy {
        PCP_POLICY_RELAXED => DemandPolicy::Relaxed,
        PCP_POLICY_STRICT => DemandPolicy::Strict,
        p => return Err(Fail(PcpStatus::InvalidArgument, format!("unknown policy {p}"))),
    };
    Ok(MarketConfig {
        bits: u64::from(c.bits),
        policy,
        proxies: c.proxies,
        ..MarketConfig::default()
    })
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length including
/// the terminator, so a caller can size the buffer and retry.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn pcp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a key pair. `mode` is one of `PCP_MODE_*`. The seed drives both
/// key generation and later encryptions under this handle.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_keypair_generate(
    bits: u32,
    mode: u32,
    seed: u64,
    out: *mut *mut PcpKeyPair,
) -> PcpStatus {
    guard(|| {
        let mode = match mode {
            PCP_MODE_RANDOM_G => GeneratorMode::RandomG,
            PCP_MODE_N_PLUS_ONE => GeneratorMode::NPlusOne,
            m => return Err(Fail(PcpStatus::InvalidArgument, format!("unknown mode {m}"))),
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = keygen(u64::from(bits), mode, &mut rng)?;
        put(out, PcpKeyPair { pk, sk, rng })
    })
}

/// # Safety
/// `kp` must come from `pcp_keypair_generate` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pcp_keypair_free(kp: *mut PcpKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

/// Writes the `PCP_KEY_ID_LEN`-byte key fingerprint to `out`.
///
/// # Safety
/// `kp` must be a live handle; `out` must hold `PCP_KEY_ID_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn pcp_keypair_key_id(kp: *const PcpKeyPair, out: *mut u8) -> PcpStatus {
    guard(|| {
        let kp = as_ref(kp, "keypair")?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(kp.pk.key_id().0.as_ptr(), out, PCP_KEY_ID_LEN);
        Ok(())
    })
}

/// Encrypts a signed value.
///
/// # Safety
/// `kp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_encrypt_i64(
    kp: *mut PcpKeyPair,
    value: i64,
    out: *mut *mut PcpCiphertext,
) -> PcpStatus {
    guard(|| {
        let kp = as_mut(kp, "keypair")?;
        let m = kp.pk.encode_i64(value)?;
        let ct = kp.pk.encrypt(&m, &mut kp.rng)?;
        put(out, PcpCiphertext(ct))
    })
}

/// Decrypts to a signed value. Fails with `OUT_OF_RANGE` if the plaintext
/// does not fit in 64 bits.
///
/// # Safety
/// `kp` and `ct` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_decrypt_i64(
    kp: *const PcpKeyPair,
    ct: *const PcpCiphertext,
    out: *mut i64,
) -> PcpStatus {
    guard(|| {
        let kp = as_ref(kp, "keypair")?;
        let ct = as_ref(ct, "ciphertext")?;
        let out = as_mut(out, "out")?;
        let m = kp.sk.decrypt(&ct.0)?;
        *out = kp.pk.decode_i64(&m)?;
        Ok(())
    })
}

unsafe fn binary(
    kp: *const PcpKeyPair,
    a: *const PcpCiphertext,
    b: *const PcpCiphertext,
    out: *mut *mut PcpCiphertext,
    op: fn(&PublicKey, &Ciphertext, &Ciphertext) -> Result<Ciphertext, PaillierError>,
) -> PcpStatus {
    guard(|| {
        let kp = as_ref(kp, "keypair")?;
        let a = as_ref(a, "a")?;
        let b = as_ref(b, "b")?;
        put(out, PcpCiphertext(op(&kp.pk, &a.0, &b.0)?))
    })
}

/// Ciphertext of the sum of the two plaintexts.
///
/// # Safety
/// All handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_he_add(
    kp: *const PcpKeyPair,
    a: *const PcpCiphertext,
    b: *const PcpCiphertext,
    out: *mut *mut PcpCiphertext,
) -> PcpStatus {
    binary(kp, a, b, out, PublicKey::he_add)
}

/// Ciphertext of `a - b`.
///
/// # Safety
/// All handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_he_sub(
    kp: *const PcpKeyPair,
    a: *const PcpCiphertext,
    b: *const PcpCiphertext,
    out: *mut *mut PcpCiphertext,
) -> PcpStatus {
    binary(kp, a, b, out, PublicKey::he_sub)
}

/// Serializes a ciphertext. `written` always receives the encoded length; if
/// `len` is smaller the call returns `BUFFER_TOO_SMALL` and writes nothing.
///
/// # Safety
/// `ct` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pcp_ciphertext_to_bytes(
    ct: *const PcpCiphertext,
    buf: *mut u8,
    len: usize,
    written: *mut usize,
) -> PcpStatus {
    guard(|| {
        let ct = as_ref(ct, "ciphertext")?;
        let written = as_mut(written, "written")?;
        let bytes = ct.0.to_bytes();
        *written = bytes.len();
        if len < bytes.len() {
            return Err(Fail(PcpStatus::BufferTooSmall, format!("need {} bytes", bytes.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Parses a ciphertext and checks that it belongs to `kp`.
///
/// # Safety
/// `kp` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pcp_ciphertext_from_bytes(
    kp: *const PcpKeyPair,
    buf: *const u8,
    len: usize,
    out: *mut *mut PcpCiphertext,
) -> PcpStatus {
    guard(|| {
        let kp = as_ref(kp, "keypair")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let bytes = std::slice::from_raw_parts(buf, len);
        put(out, PcpCiphertext(kp.pk.ciphertext_from_bytes(bytes)?))
    })
}

/// # Safety
/// `ct` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pcp_ciphertext_free(ct: *mut PcpCiphertext) {
    if !ct.is_null() {
        drop(Box::from_raw(ct));
    }
}

#[no_mangle]
pub extern "C" fn pcp_market_config_default() -> PcpMarketConfig {
    let d = MarketConfig::default();
    PcpMarketConfig {
        bits: d.bits as u32,
        policy: PCP_POLICY_RELAXED,
        proxies: d.proxies,
        seed: 1,
    }
}

/// Opens a market on a JSON scenario and issues the round-0 keys.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `cfg` and `out` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_new(
    scenario_json: *const c_char,
    cfg: *const PcpMarketConfig,
    out: *mut *mut PcpMarket,
) -> PcpStatus {
    guard(|| {
        if scenario_json.is_null() {
            return Err(null("scenario_json"));
        }
        let cfg = as_ref(cfg, "cfg")?;
        let text = CStr::from_ptr(scenario_json)
            .to_str()
            .map_err(|_| Fail(PcpStatus::InvalidArgument, "scenario is not UTF-8".into()))?;
        let scenario = Scenario::from_json(text)?;
        let market = Market::new(scenario, market_config(cfg)?, cfg.seed)?;
        put(out, PcpMarket(market))
    })
}

/// Runs one full round. `finished` is set once no further round will open.
///
/// # Safety
/// `m` must be a live handle; `finished` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_step(m: *mut PcpMarket, finished: *mut bool) -> PcpStatus {
    guard(|| {
        let m = as_mut(m, "market")?;
        let finished = as_mut(finished, "finished")?;
        m.0.step_round()?;
        *finished = m.0.phase() == Phase::Finished;
        Ok(())
    })
}

/// Runs rounds until the market finishes.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_run(m: *mut PcpMarket) -> PcpStatus {
    guard(|| {
        let m = as_mut(m, "market")?;
        while m.0.step_round()?.is_some() {}
        Ok(())
    })
}

/// Number of completed rounds.
///
/// # Safety
/// `m` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_round_count(m: *const PcpMarket, out: *mut usize) -> PcpStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(m, "market")?.0.history().len();
        Ok(())
    })
}

/// Number of matches over all completed rounds.
///
/// # Safety
/// `m` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_match_count(m: *const PcpMarket, out: *mut usize) -> PcpStatus {
    guard(|| {
        let m = as_ref(m, "market")?;
        *as_mut(out, "out")? = m.0.history().iter().map(|r| r.matches.len()).sum();
        Ok(())
    })
}

/// The `index`-th match, in round then buyer order.
///
/// # Safety
/// `m` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_match_get(
    m: *const PcpMarket,
    index: usize,
    out: *mut PcpMatch,
) -> PcpStatus {
    guard(|| {
        let m = as_ref(m, "market")?;
        let out = as_mut(out, "out")?;
        let hit = m
            .0
            .history()
            .iter()
            .flat_map(|r| &r.matches)
            .nth(index)
            .ok_or_else(|| Fail(PcpStatus::OutOfRange, format!("no match at index {index}")))?;
        *out = PcpMatch {
            buyer_id: hit.buyer_id,
            seller_id: hit.seller_id,
            round: hit.round,
            w_index_hi: (hit.w_index >> 64) as u64,
            w_index_lo: hit.w_index as u64,
        };
        Ok(())
    })
}

/// The message log as JSON lines. Free the string with `pcp_string_free`.
///
/// # Safety
/// `m` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_log_jsonl(m: *const PcpMarket, out: *mut *mut c_char) -> PcpStatus {
    guard(|| {
        let m = as_ref(m, "market")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CString::new(m.0.log().export_lines())
            .map_err(|_| Fail(PcpStatus::Protocol, "log contains NUL".into()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pcp_market_free(m: *mut PcpMarket) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pcp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
