//! C ABI over `garment-core`.
//!
//! Every function returns a `GarmentStatus`. On failure a message is kept
//! per thread and can be read with `garment_last_error_message`. Objects are
//! opaque handles released with their matching `*_free` function; strings
//! and byte buffers returned by the library are released with
//! `garment_string_free` and `garment_bytes_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use garment_core::config::Defaults;
use garment_core::document::DesignDocument;
use garment_core::raster::RasterImage;
use garment_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GarmentStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    DimensionMismatch = 3,
    OpenContour = 4,
    UnknownColor = 5,
    UnknownCluster = 6,
    ImageDecode = 7,
    Io = 8,
    Json = 9,
    Unprocessable = 10,
    Panic = 11,
}

/// Opaque design document.
pub struct GarmentDocument(DesignDocument);

/// Opaque RGB image.
pub struct GarmentImage(RasterImage);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GarmentStatus {
    match e.root() {
        Error::InvalidArgument(_) => GarmentStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => GarmentStatus::DimensionMismatch,
        Error::OpenContour { .. } => GarmentStatus::OpenContour,
        Error::UnknownColor(..) => GarmentStatus::UnknownColor,
        Error::UnknownCluster(_) => GarmentStatus::UnknownCluster,
        Error::Image(_) => GarmentStatus::ImageDecode,
        Error::Io(_) => GarmentStatus::Io,
        Error::Json(_) => GarmentStatus::Json,
        _ => GarmentStatus::Unprocessable,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (GarmentStatus, String)>) -> GarmentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GarmentStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside garment library".into());
            GarmentStatus::Panic
        }
    }
}

fn core<T>(r: garment_core::Result<T>) -> Result<T, (GarmentStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (GarmentStatus, String) {
    (GarmentStatus::NullPointer, format!("{name} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (GarmentStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GarmentStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn garment_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn garment_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a design document from NUL-terminated JSON.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn garment_document_from_json(json: *const c_char, out: *mut *mut GarmentDocument) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = c_str(json, "json")?;
        let doc = core(DesignDocument::from_json(s))?;
        write_out(out, GarmentDocument(doc));
        Ok(())
    })
}

/// Serializes a document to JSON; free the result with `garment_string_free`.
///
/// # Safety
/// `doc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn garment_document_to_json(doc: *const GarmentDocument, out: *mut *mut c_char) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        let json = core(doc.0.to_json())?;
        *out = CString::new(json).map_err(|e| (GarmentStatus::Json, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Replaces color `from` by `to` in the texture layer and color points.
///
/// # Safety
/// `doc` must come from this library; `from` and `to` point to 3 bytes;
/// `replaced` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn garment_document_recolor(
    doc: *mut GarmentDocument,
    from: *const u8,
    to: *const u8,
    replaced: *mut usize,
) -> GarmentStatus {
    guard(|| {
        let doc = doc.as_mut().ok_or_else(|| null("doc"))?;
        if from.is_null() || to.is_null() {
            return Err(null("color"));
        }
        let f = [*from, *from.add(1), *from.add(2)];
        let t = [*to, *to.add(1), *to.add(2)];
        let n = core(doc.0.recolor(f, t))?;
        if !replaced.is_null() {
            *replaced = n;
        }
        Ok(())
    })
}

/// # Safety
/// `doc` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn garment_document_free(doc: *mut GarmentDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Synthesizes the shaded garment of a document with default settings.
///
/// # Safety
/// `doc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn garment_synthesize(doc: *const GarmentDocument, out: *mut *mut GarmentImage) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc = doc.as_ref().ok_or_else(|| null("doc"))?;
        let d = Defaults::default();
        let res = core(garment_core::synthesizer::full_pipeline(&doc.0, &d.synth, &d.shade, &d.patchmatch))?;
        write_out(out, GarmentImage(res.image));
        Ok(())
    })
}

/// Extracts a sparse-mode design document from a photo.
///
/// # Safety
/// `img` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn garment_extract(img: *const GarmentImage, out: *mut *mut GarmentDocument) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let img = img.as_ref().ok_or_else(|| null("img"))?;
        let res = garment_core::api::extract(&img.0, &Defaults::default()).map_err(|e| {
            let status = match e.status {
                415 => GarmentStatus::ImageDecode,
                422 => GarmentStatus::OpenContour,
                _ => GarmentStatus::Unprocessable,
            };
            (status, e.message)
        })?;
        write_out(out, GarmentDocument(res.document));
        Ok(())
    })
}

/// Expands a texture patch to `width` x `height`.
///
/// # Safety
/// `patch` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn garment_expand_texture(
    patch: *const GarmentImage,
    width: usize,
    height: usize,
    seed: u64,
    out: *mut *mut GarmentImage,
) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let patch = patch.as_ref().ok_or_else(|| null("patch"))?;
        let cfg = Defaults::default().patchmatch;
        let img = core(garment_core::patchmatch::expand_texture(&patch.0, width, height, &cfg, seed))?;
        write_out(out, GarmentImage(img));
        Ok(())
    })
}

/// Decodes a PNG or JPEG buffer.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn garment_image_decode(data: *const u8, len: usize, out: *mut *mut GarmentImage) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let img = core(RasterImage::from_png_bytes(bytes))?;
        write_out(out, GarmentImage(img));
        Ok(())
    })
}

/// Builds an image from interleaved 8-bit RGB rows.
///
/// # Safety
/// `rgb` must point to `width * height * 3` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn garment_image_from_rgb8(
    rgb: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut GarmentImage,
) -> GarmentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(3))
            .ok_or((GarmentStatus::InvalidArgument, "image too large".to_string()))?;
        let bytes = std::slice::from_raw_parts(rgb, n);
        let img = core(RasterImage::from_rgb8(width, height, bytes))?;
        write_out(out, GarmentImage(img));
        Ok(())
    })
}

/// # Safety
/// `img` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn garment_image_width(img: *const GarmentImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `img` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn garment_image_height(img: *const GarmentImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Copies the pixels as interleaved 8-bit RGB into `buf`, which must hold
/// `width * height * 3` bytes.
///
/// # Safety
/// `img` must come from this library and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn garment_image_copy_rgb8(img: *const GarmentImage, buf: *mut u8, len: usize) -> GarmentStatus {
    guard(|| {
        let img = img.as_ref().ok_or_else(|| null("img"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let bytes = img.0.to_rgb8();
        if len < bytes.len() {
            return Err((GarmentStatus::InvalidArgument, format!("buffer holds {len} bytes, need {}", bytes.len())));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Encodes an image as PNG; free the buffer with `garment_bytes_free`.
///
/// # Safety
/// `img` must come from this library; `data` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn garment_image_encode_png(img: *const GarmentImage, data: *mut *mut u8, len: *mut usize) -> GarmentStatus {
    guard(|| {
        let img = img.as_ref().ok_or_else(|| null("img"))?;
        if data.is_null() || len.is_null() {
            return Err(null("out"));
        }
        let bytes = core(img.0.to_png_bytes())?.into_boxed_slice();
        *len = bytes.len();
        *data = Box::into_raw(bytes) as *mut u8;
        Ok(())
    })
}

/// # Safety
/// `img` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn garment_image_free(img: *mut GarmentImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn garment_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data` and `len` must come from `garment_image_encode_png`.
#[no_mangle]
pub unsafe extern "C" fn garment_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}
