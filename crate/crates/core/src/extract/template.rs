//! Registered document layouts.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::category::CategoryRegistry;
use super::matching::MATCH_WIDTH;
use super::ExtractError;
use crate::obfuscate::FaceDetector;
use crate::raster::{RasterImage, Rect};

pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "coordinates")]
    pub rect: Rect,
    pub sensitive: bool,
    pub category: String,
}

impl FieldSpec {
    pub fn new(name: &str, rect: Rect, sensitive: bool, category: &str) -> Self {
        Self {
            name: name.to_string(),
            rect,
            sensitive,
            category: category.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemplatePage {
    pub id: String,
    pub name: String,
    /// Reference image with faces and fields painted white.
    pub reference: RasterImage,
    pub fields: Vec<FieldSpec>,
    /// Every whitened rectangle: declared fields plus detected faces.
    pub masked: Vec<Rect>,
    /// Reference downscaled to the matching width.
    pub thumb: RasterImage,
}

impl TemplatePage {
    pub fn size(&self) -> (u32, u32) {
        (self.reference.width(), self.reference.height())
    }

    /// Masked rectangles mapped onto an image of `width × height`.
    pub fn masked_scaled(&self, width: u32, height: u32) -> Vec<Rect> {
        let fx = width as f64 / self.reference.width() as f64;
        let fy = height as f64 / self.reference.height() as f64;
        self.masked
            .iter()
            .map(|r| r.scale(fx, fy).clip(width, height))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub id: String,
    pub name: String,
    pub pages: Vec<TemplatePage>,
}

/// One page handed to registration.
#[derive(Debug, Clone)]
pub struct PageInput {
    pub name: String,
    pub image: RasterImage,
    pub fields: Vec<FieldSpec>,
}

/// JSON manifest accompanying PNG pages on registration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateManifest {
    pub name: String,
    pub pages: Vec<PageManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageManifest {
    pub name: String,
    /// PNG path relative to the manifest.
    pub image: String,
    pub fields: Vec<FieldSpec>,
}

fn stable_uuid(parts: &[&[u8]]) -> String {
    let mut bytes = Vec::new();
    for p in parts {
        bytes.extend_from_slice(&(p.len() as u32).to_be_bytes());
        bytes.extend_from_slice(p);
    }
    let h = crate::sha256(&bytes);
    let mut b = [0u8; 16];
    b.copy_from_slice(&h[..16]);
    uuid::Builder::from_random_bytes(b).into_uuid().to_string()
}

/// Builds a processed page: faces and fields whitened, thumbnail attached.
pub fn process_page(
    template_name: &str,
    index: usize,
    input: &PageInput,
    categories: &CategoryRegistry,
    detector: &dyn FaceDetector,
) -> Result<TemplatePage, ExtractError> {
    let (w, h) = (input.image.width(), input.image.height());
    for f in &input.fields {
        if f.rect.is_empty() || !f.rect.fits(w, h) {
            return Err(ExtractError::InvalidTemplate(format!(
                "field {} rect {} outside {w}x{h} page",
                f.name, f.rect
            )));
        }
        if !categories.contains(&f.category) {
            return Err(ExtractError::InvalidTemplate(format!(
                "field {} uses unknown category {}",
                f.name, f.category
            )));
        }
    }
    let mut masked: Vec<Rect> = input.fields.iter().map(|f| f.rect).collect();
    masked.extend(detector.detect(&input.image).into_iter().map(|r| r.clip(w, h)));
    let mut reference = input.image.clone();
    for r in &masked {
        reference.fill_rect(r, WHITE);
    }
    let thumb = reference.resize_to_width(MATCH_WIDTH.min(w));
    Ok(TemplatePage {
        id: stable_uuid(&[template_name.as_bytes(), &(index as u32).to_be_bytes(), &input.image.digest()]),
        name: input.name.clone(),
        reference,
        fields: input.fields.clone(),
        masked,
        thumb,
    })
}

/// Read-mostly template store; registration takes the write lock.
#[derive(Debug)]
pub struct TemplateRegistry {
    categories: CategoryRegistry,
    templates: RwLock<Vec<Arc<Template>>>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::new(CategoryRegistry::defaults())
    }
}

impl TemplateRegistry {
    pub fn new(categories: CategoryRegistry) -> Self {
        Self {
            categories,
            templates: RwLock::new(Vec::new()),
        }
    }

    pub fn categories(&self) -> &CategoryRegistry {
        &self.categories
    }

    pub fn register(
        &self,
        name: &str,
        pages: &[PageInput],
        detector: &dyn FaceDetector,
    ) -> Result<Arc<Template>, ExtractError> {
        if pages.is_empty() {
            return Err(ExtractError::InvalidTemplate(format!(
                "template {name} has no pages"
            )));
        }
        let processed = pages
            .iter()
            .enumerate()
            .map(|(i, p)| process_page(name, i, p, &self.categories, detector))
            .collect::<Result<Vec<_>, _>>()?;
        let page_ids: Vec<&[u8]> = processed.iter().map(|p| p.id.as_bytes()).collect();
        let mut id_parts: Vec<&[u8]> = vec![name.as_bytes()];
        id_parts.extend(page_ids);
        let template = Arc::new(Template {
            id: stable_uuid(&id_parts),
            name: name.to_string(),
            pages: processed,
        });
        let mut all = self.templates.write().expect("registry lock");
        all.retain(|t| t.name != name);
        all.push(template.clone());
        Ok(template)
    }

    pub fn snapshot(&self) -> Vec<Arc<Template>> {
        self.templates.read().expect("registry lock").clone()
    }

    pub fn get(&self, id_or_name: &str) -> Option<Arc<Template>> {
        self.templates
            .read()
            .expect("registry lock")
            .iter()
            .find(|t| t.id == id_or_name || t.name == id_or_name)
            .cloned()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.read().expect("registry lock").is_empty()
    }

    pub fn len(&self) -> usize {
        self.templates.read().expect("registry lock").len()
    }
}
