// Dataset manifests in the toolkit's JSON layout. Paths are stored
// relative to the manifest file; OOD entries use label -1. The optional
// `transform` block records the preprocessing recipe for provenance.

import { readFileSync, writeFileSync } from 'fs'
import { dirname, join } from 'path'

export type ManifestRole = 'train' | 'id-eval' | 'ood-eval'

export interface ManifestEntry {
  path: string
  label: number
}

export interface DatasetManifest {
  role: ManifestRole
  entries: ManifestEntry[]
  transform?: Record<string, unknown>
}

export function writeManifest(path: string, manifest: DatasetManifest): void {
  // keys written in sorted order; a replacer array would strip nested keys
  const doc: Record<string, unknown> = {
    entries: manifest.entries.map(e => ({ label: e.label, path: e.path })),
    role: manifest.role,
  }
  if (manifest.transform) doc.transform = manifest.transform
  writeFileSync(path, JSON.stringify(doc, null, 2) + '\n')
}

export function readManifest(path: string): DatasetManifest & { baseDir: string } {
  const doc = JSON.parse(readFileSync(path, 'utf-8'))
  if (!doc.role || !Array.isArray(doc.entries)) {
    throw new Error(`malformed manifest ${path}: need 'role' and 'entries'`)
  }
  return {
    role: doc.role,
    entries: doc.entries.map((e: any) => ({ path: String(e.path), label: Number(e.label) })),
    transform: doc.transform,
    baseDir: dirname(path),
  }
}

export function resolveEntry(manifest: { baseDir: string }, entry: ManifestEntry): string {
  return join(manifest.baseDir, entry.path)
}
