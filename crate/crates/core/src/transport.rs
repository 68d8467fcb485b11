//! The trusted/untrusted boundary. Every `call` is one round trip, which is
//! what the trusted core counts as a boundary crossing.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use crate::protocol::{read_frame, write_frame, Request, Response};
use crate::store::EncryptedGraphStore;

/// A store shared between the trusted core, a server thread and test code.
pub type SharedStore = Arc<RwLock<EncryptedGraphStore>>;

pub fn share(store: EncryptedGraphStore) -> SharedStore {
    Arc::new(RwLock::new(store))
}

pub trait Transport {
    fn call(&mut self, request: Request) -> io::Result<Response>;
}

/// In-process transport: hands the request object straight to the store.
#[derive(Debug, Clone)]
pub struct DirectTransport {
    store: SharedStore,
}

impl DirectTransport {
    pub fn new(store: EncryptedGraphStore) -> Self {
        DirectTransport { store: share(store) }
    }

    pub fn from_shared(store: SharedStore) -> Self {
        DirectTransport { store }
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }
}

impl Transport for DirectTransport {
    fn call(&mut self, request: Request) -> io::Result<Response> {
        let mut store = self
            .store
            .write()
            .map_err(|_| io::Error::other("store lock poisoned"))?;
        Ok(store.handle(request))
    }
}

/// Length-prefixed frames over any byte stream.
#[derive(Debug)]
pub struct FramedTransport<S: io::Read + Write> {
    reader: BufReader<S>,
    writer: BufWriter<S>,
}

impl FramedTransport<TcpStream> {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(FramedTransport {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }
}

impl<S: io::Read + Write> Transport for FramedTransport<S> {
    fn call(&mut self, request: Request) -> io::Result<Response> {
        write_frame(&mut self.writer, &request.encode())?;
        self.writer.flush()?;
        let body = read_frame(&mut self.reader)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"))?;
        Response::decode(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// Answers framed requests on one connection until the peer closes it.
pub fn serve_connection(stream: TcpStream, store: &SharedStore) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(body) = read_frame(&mut reader)? {
        let request =
            Request::decode(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let response = store
            .write()
            .map_err(|_| io::Error::other("store lock poisoned"))?
            .handle(request);
        write_frame(&mut writer, &response.encode())?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections on `listener`, one thread each, all sharing `store`.
pub fn serve(listener: TcpListener, store: SharedStore) -> JoinHandle<()> {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let store = Arc::clone(&store);
            thread::spawn(move || {
                let _ = serve_connection(stream, &store);
            });
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldcf::{FilterParams, SubFilterId};
    use crate::protocol::{LoadItem, LoadToken, Protocol};

    #[test]
    fn socket_and_direct_transports_agree() {
        let store = EncryptedGraphStore::new(Protocol::VSecGraph, FilterParams::default(), None)
            .unwrap();
        let shared = share(store);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        serve(listener, Arc::clone(&shared));
        let mut remote = FramedTransport::connect(addr).unwrap();
        let mut direct = DirectTransport::from_shared(shared);
        let request = Request::Load(vec![
            LoadToken::SubFilter(SubFilterId::ROOT),
            LoadToken::Stag([3; 32]),
        ]);
        let a = remote.call(request.clone()).unwrap();
        let b = direct.call(request).unwrap();
        assert_eq!(a, b);
        let Response::Loaded(items) = a else { panic!() };
        assert!(matches!(items[0], Ok(LoadItem::SubFilter(_))));
        assert!(items[1].is_err());
    }
}
