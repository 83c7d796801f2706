// Binary tensor container shared with the Python toolkit. Little-endian:
// magic "ASHT", u16 version=1, u8 dtype=0 (float32), u8 ndim, ndim x u32
// dims, then row-major float32 payload. Round-trips must be bit-exact.

import { readFileSync, writeFileSync } from 'fs'

export const MAGIC = 'ASHT'
export const FORMAT_VERSION = 1
export const DTYPE_F32 = 0

export interface TensorFile {
  dims: number[]
  values: Float32Array
}

export function encodeTensor(dims: number[], values: Float32Array): Buffer {
  const count = dims.reduce((a, b) => a * b, 1)
  if (dims.length === 0 || dims.some(d => d <= 0 || !Number.isInteger(d))) {
    throw new Error(`bad dims ${JSON.stringify(dims)}: extents must be positive integers`)
  }
  if (count !== values.length) {
    throw new Error(`length mismatch: dims ${JSON.stringify(dims)} imply ${count} values, got ${values.length}`)
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error('non-finite value in tensor payload')
  }
  const buf = Buffer.alloc(8 + dims.length * 4 + count * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt16LE(FORMAT_VERSION, 4)
  buf.writeUInt8(DTYPE_F32, 6)
  buf.writeUInt8(dims.length, 7)
  dims.forEach((d, i) => buf.writeUInt32LE(d, 8 + i * 4))
  const payload = 8 + dims.length * 4
  for (let i = 0; i < count; i++) buf.writeFloatLE(values[i], payload + i * 4)
  return buf
}

export function writeTensor(path: string, dims: number[], values: Float32Array): void {
  writeFileSync(path, encodeTensor(dims, values))
}

export function decodeTensor(buf: Buffer, source = '<buffer>'): TensorFile {
  if (buf.length < 8) throw new Error(`truncated header in ${source}`)
  if (buf.toString('ascii', 0, 4) !== MAGIC) throw new Error(`bad magic in ${source}`)
  const version = buf.readUInt16LE(4)
  if (version !== FORMAT_VERSION) {
    throw new Error(`version mismatch in ${source}: got ${version}, want ${FORMAT_VERSION}`)
  }
  const dtype = buf.readUInt8(6)
  if (dtype !== DTYPE_F32) throw new Error(`unsupported dtype ${dtype} in ${source}`)
  const ndim = buf.readUInt8(7)
  if (ndim === 0) throw new Error(`bad dims in ${source}: ndim must be >= 1`)
  if (buf.length < 8 + ndim * 4) throw new Error(`truncated dims in ${source}`)
  const dims: number[] = []
  for (let i = 0; i < ndim; i++) dims.push(buf.readUInt32LE(8 + i * 4))
  if (dims.some(d => d === 0)) throw new Error(`bad dims in ${source}: zero extent`)
  const count = dims.reduce((a, b) => a * b, 1)
  const offset = 8 + ndim * 4
  const got = buf.length - offset
  if (got < count * 4) {
    throw new Error(`truncated payload in ${source}: expected ${count * 4} bytes, got ${got}`)
  }
  if (got > count * 4) {
    throw new Error(`length mismatch in ${source}: dims imply ${count * 4} payload bytes, got ${got}`)
  }
  const values = new Float32Array(count)
  for (let i = 0; i < count; i++) values[i] = buf.readFloatLE(offset + i * 4)
  return { dims, values }
}

export function readTensor(path: string): TensorFile {
  return decodeTensor(readFileSync(path), path)
}
