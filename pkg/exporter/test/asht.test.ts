import { mkdtempSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { decodeTensor, encodeTensor, readTensor, writeTensor } from '../src/asht.ts'

// bytes produced by the Python toolkit for the same tensors; both sides of
// the bridge must agree on the wire format exactly
const GOLDEN_1D = '4153485401000001020000000000c03f000000c0'
const GOLDEN_2D =
  '415348540100000202000000030000000000803f0000004000004040000080400000a0400000c040'

describe('tensor container', () => {
  it('matches the toolkit byte layout exactly', () => {
    expect(encodeTensor([2], new Float32Array([1.5, -2.0])).toString('hex')).toBe(GOLDEN_1D)
    expect(
      encodeTensor([2, 3], new Float32Array([1, 2, 3, 4, 5, 6])).toString('hex'),
    ).toBe(GOLDEN_2D)
  })

  it('round-trips bit-exactly through the filesystem', () => {
    const dir = mkdtempSync(join(tmpdir(), 'asht-'))
    const values = new Float32Array([0.1, -0.2, 3.5e-8, 12345.678])
    const path = join(dir, 't.asht')
    writeTensor(path, [4], values)
    const back = readTensor(path)
    expect(back.dims).toEqual([4])
    expect(Buffer.from(back.values.buffer).equals(Buffer.from(values.buffer))).toBe(true)
  })

  it('decodes the golden buffers', () => {
    const t = decodeTensor(Buffer.from(GOLDEN_2D, 'hex'))
    expect(t.dims).toEqual([2, 3])
    expect(Array.from(t.values)).toEqual([1, 2, 3, 4, 5, 6])
  })

  it('rejects bad magic', () => {
    const buf = Buffer.from(GOLDEN_1D, 'hex')
    buf.write('NOPE', 0, 'ascii')
    expect(() => decodeTensor(buf)).toThrow(/bad magic/)
  })

  it('rejects version mismatch', () => {
    const buf = Buffer.from(GOLDEN_1D, 'hex')
    buf.writeUInt16LE(2, 4)
    expect(() => decodeTensor(buf)).toThrow(/version mismatch/)
  })

  it('rejects truncated payload', () => {
    const buf = Buffer.from(GOLDEN_1D, 'hex').subarray(0, 16)
    expect(() => decodeTensor(buf)).toThrow(/truncated payload/)
  })

  it('rejects trailing bytes as length mismatch', () => {
    const buf = Buffer.concat([Buffer.from(GOLDEN_1D, 'hex'), Buffer.alloc(4)])
    expect(() => decodeTensor(buf)).toThrow(/length mismatch/)
  })

  it('refuses to encode non-finite values', () => {
    expect(() => encodeTensor([1], new Float32Array([NaN]))).toThrow(/non-finite/)
  })
})
